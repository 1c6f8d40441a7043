"""Corpus ingestion, splitting, storage and synthetic corpus generation.

A corpus stores, per glyph: font id, class label, the normalized relative
glyph (quantized through the float32 sequence encoding so stored sequences
decode back to the stored glyph exactly), its sequence tensor and its
64x64 raster.  On disk a corpus is a human-readable JSONL manifest plus raw
binary sequence/raster blobs and a JSON metadata file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .blockfont import SyntheticSpec, synth_glyph
from .codec import MAX_LEN, TUPLE_WIDTH, SequenceTensor, decode_glyph, encode_glyph
from .raster import IMAGE_SIZE, Raster, Viewbox, default_viewbox, render
from .svgpath import (
    Glyph,
    PathError,
    char_to_label,
    glyph_to_path,
    normalize,
    parse_path,
    rescale,
    to_absolute,
)

log = logging.getLogger(__name__)

RESCALE_PERCENTILE = 99.5
SYNTH_VIEWBOX = Viewbox(-0.125, -0.125, 1.25)
_MANIFEST = "manifest.jsonl"
_SEQUENCES = "sequences.bin"
_RASTERS = "rasters.bin"
_META = "meta.json"


class NoValidGlyphs(ValueError):
    pass


@dataclass(frozen=True)
class CorpusEntry:
    font_id: str
    label: int
    glyph: Glyph  # normalized, relative, float32-exact coordinates
    seq: SequenceTensor
    raster: Raster


@dataclass
class Corpus:
    entries: list[CorpusEntry]
    rescale: float
    viewbox: Viewbox
    split_seed: int | None = None
    font_specs: dict[str, dict] = field(default_factory=dict)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def rasters(self) -> np.ndarray:
        return np.stack([e.raster.pixels for e in self.entries])[..., None]

    def font_ids(self) -> list[str]:
        return sorted({e.font_id for e in self.entries})


def _quantize(glyph: Glyph) -> tuple[Glyph, SequenceTensor]:
    seq = encode_glyph(glyph)
    return decode_glyph(seq, glyph.label), seq


_FILENAME = re.compile(r"^(?P<font>.+)_(?P<char>.)\.svg$")


def _path_strings(svg_text: str) -> list[str]:
    root = ET.fromstring(svg_text)
    out = []
    for el in root.iter():
        if el.tag.rsplit("}", 1)[-1] == "path" and el.get("d"):
            out.append(el.get("d"))
    return out


def ingest(directory: str) -> Corpus:
    """Build a corpus from <font>_<char>.svg files; skips are logged."""
    names = sorted(n for n in os.listdir(directory) if n.endswith(".svg"))
    skipped: list[tuple[str, str]] = []
    parsed: list[tuple[str, str, int, Glyph]] = []
    for name in names:
        m = _FILENAME.match(name)
        if not m:
            skipped.append((name, "filename not <font>_<char>.svg"))
            continue
        try:
            label = char_to_label(m.group("char"))
        except (KeyError, ValueError):
            skipped.append((name, "label not in 62-class set"))
            continue
        try:
            with open(os.path.join(directory, name)) as f:
                ds = _path_strings(f.read())
            if not ds:
                skipped.append((name, "no path elements"))
                continue
            commands = ()
            for d in ds:
                commands = commands + parse_path(d)
        except (PathError, ET.ParseError) as exc:
            skipped.append((name, f"{type(exc).__name__}: {exc}"))
            continue
        parsed.append((name, m.group("font"), label, Glyph(label, commands)))
    if not parsed:
        for name, reason in skipped:
            log.info("skipped %s: %s", name, reason)
        raise NoValidGlyphs(f"no usable .svg glyphs in {directory}")
    coords = np.concatenate([np.abs(_glyph_coords(g)) for _, _, _, g in parsed])
    factor = float(np.percentile(coords, RESCALE_PERCENTILE)) if coords.size else 1.0
    if factor <= 0.0:
        factor = 1.0
    normalized: list[tuple[str, int, Glyph]] = []
    for name, font_id, label, glyph in parsed:
        try:
            normalized.append((font_id, label, rescale(normalize(glyph), factor)))
        except PathError as exc:
            skipped.append((name, f"{type(exc).__name__}: {exc}"))
    for name, reason in skipped:
        log.info("skipped %s: %s", name, reason)
    if not normalized:
        raise NoValidGlyphs(f"no glyph in {directory} passed normalization")
    quantized = [(fid, lab, *_quantize(g)) for fid, lab, g in normalized]
    points = np.concatenate([_glyph_coords(to_absolute(g)) for _, _, g, _ in quantized])
    viewbox = default_viewbox(points)
    entries = [
        CorpusEntry(fid, lab, g, seq, render(to_absolute(g), viewbox))
        for fid, lab, g, seq in quantized
    ]
    return Corpus(entries, rescale=factor, viewbox=viewbox, skipped=skipped)


def _glyph_coords(glyph: Glyph) -> np.ndarray:
    pts = [p for cmd in glyph.drawing_commands() for p in cmd.points]
    if not pts:
        return np.zeros((0, 2))
    return np.array([[p.x, p.y] for p in pts])


def split(corpus: Corpus, ratio: float = 0.9, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Partition whole fonts by a deterministic hash of (seed, font_id)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    train_entries, test_entries = [], []
    for entry in corpus.entries:
        digest = hashlib.sha256(f"{seed}:{entry.font_id}".encode()).digest()
        frac = int.from_bytes(digest[:8], "little") / 2**64
        (train_entries if frac < ratio else test_entries).append(entry)
    make = lambda ents: Corpus(
        ents,
        rescale=corpus.rescale,
        viewbox=corpus.viewbox,
        split_seed=seed,
        font_specs=dict(corpus.font_specs),
    )
    return make(train_entries), make(test_entries)


def synthesize(specs: list[SyntheticSpec], labels: list[int], seed: int = 0) -> Corpus:
    """Deterministic block-letter corpus: one font per spec, one glyph per label."""
    entries = []
    font_specs = {}
    for i, spec in enumerate(specs):
        font_id = f"synth{i:03d}"
        font_specs[font_id] = dataclasses.asdict(spec)
        for label in labels:
            glyph, seq = _quantize(normalize(synth_glyph(spec, label)))
            raster = render(to_absolute(glyph), SYNTH_VIEWBOX)
            entries.append(CorpusEntry(font_id, label, glyph, seq, raster))
    return Corpus(
        entries, rescale=1.0, viewbox=SYNTH_VIEWBOX, split_seed=seed, font_specs=font_specs
    )


# -- on-disk format -----------------------------------------------------------
#
# manifest.jsonl: one JSON object per entry: {"font_id", "label", "d"}
#   (d = absolute-coordinate path string of the normalized glyph, for
#    human inspection; the binary sequence blob is authoritative)
# sequences.bin: per entry, little-endian u32 length then max_len*10 f32 values
# rasters.bin: per entry, 64*64 f32 pixel values, row-major
# meta.json: rescale, viewbox, split_seed, entry count, max_len, font_specs


def save_corpus(corpus: Corpus, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, _MANIFEST), "w") as mf:
        for e in corpus.entries:
            mf.write(
                json.dumps(
                    {"font_id": e.font_id, "label": e.label, "d": glyph_to_path(e.glyph)}
                )
                + "\n"
            )
    with open(os.path.join(directory, _SEQUENCES), "wb") as sf:
        for e in corpus.entries:
            sf.write(struct.pack("<I", e.seq.length))
            sf.write(e.seq.data.astype("<f4").tobytes())
    with open(os.path.join(directory, _RASTERS), "wb") as rf:
        for e in corpus.entries:
            rf.write(e.raster.pixels.astype("<f4").tobytes())
    meta = {
        "rescale": corpus.rescale,
        "viewbox": [corpus.viewbox.min_x, corpus.viewbox.min_y, corpus.viewbox.size],
        "split_seed": corpus.split_seed,
        "count": len(corpus.entries),
        "max_len": corpus.entries[0].seq.max_len if corpus.entries else MAX_LEN,
        "font_specs": corpus.font_specs,
    }
    with open(os.path.join(directory, _META), "w") as f:
        json.dump(meta, f, indent=2)


def load_corpus(directory: str) -> Corpus:
    with open(os.path.join(directory, _META)) as f:
        meta = json.load(f)
    viewbox = Viewbox(*meta["viewbox"])
    max_len = meta["max_len"]
    entries = []
    with open(os.path.join(directory, _MANIFEST)) as mf, open(
        os.path.join(directory, _SEQUENCES), "rb"
    ) as sf, open(os.path.join(directory, _RASTERS), "rb") as rf:
        for line in mf:
            rec = json.loads(line)
            (length,) = struct.unpack("<I", sf.read(4))
            data = np.frombuffer(sf.read(4 * max_len * TUPLE_WIDTH), dtype="<f4").reshape(
                max_len, TUPLE_WIDTH
            ).copy()
            mask = np.zeros(max_len, dtype=bool)
            mask[:length] = True
            seq = SequenceTensor(data, length, mask)
            pixels = np.frombuffer(rf.read(4 * IMAGE_SIZE * IMAGE_SIZE), dtype="<f4").reshape(
                IMAGE_SIZE, IMAGE_SIZE
            ).copy()
            glyph = decode_glyph(seq, rec["label"])
            entries.append(
                CorpusEntry(rec["font_id"], rec["label"], glyph, seq, Raster(pixels, viewbox))
            )
    if len(entries) != meta["count"]:
        raise ValueError(f"manifest has {len(entries)} entries, meta says {meta['count']}")
    return Corpus(
        entries,
        rescale=meta["rescale"],
        viewbox=viewbox,
        split_seed=meta["split_seed"],
        font_specs=meta.get("font_specs", {}),
    )
