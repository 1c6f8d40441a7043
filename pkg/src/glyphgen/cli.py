"""Command-line interface.

Subcommands cover the full pipeline: corpus construction (ingest, synth,
split), model training (train-vae, train-decoder), evaluation artifacts
(eval), latent tools (propagate, apply_concept), bundle assembly, and the
HTTP server (serve).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import dataset as ds
from . import latent
from .checkpoint import load_config, load_tensors
from .raster import Viewbox, render
from .service import ModelBundle, load_bundle, save_bundle, serve
from .svg_decoder import DecoderConfig, SvgDecoder, best_of_n
from .svgpath import (
    LABEL_CHARS,
    Glyph,
    char_to_label,
    glyph_to_path,
    normalize,
    parse_path,
    to_absolute,
)
from .training import (
    TrainRunConfig,
    nll_by_class,
    nll_vs_length,
    train_decoder,
    train_vae,
)
from .vae import ConvVae, VaeConfig

DEFAULT_SPECS = [
    {"stroke_weight": 0.06},
    {"stroke_weight": 0.14},
    {"stroke_weight": 0.06, "slant_deg": 12.0},
    {"stroke_weight": 0.06, "width_scale": 0.6},
]


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _char_kind(char: str) -> str:
    if char.isdigit():
        return "digit"
    return "upper" if char.isupper() else "lower"


def _glyph_filename(char: str) -> str:
    # case-insensitive filesystems would collide A.svg with a.svg
    return f"{_char_kind(char)}_{char}.svg"


def _read_path_data(path: str) -> str:
    with open(path) as f:
        text = f.read().strip()
    if text.startswith("<"):
        paths = ds._path_strings(text)
        if not paths:
            raise ValueError(f"no path elements in {path}")
        return " ".join(paths)
    return text


def _svg_document(d: str, viewbox: Viewbox) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{viewbox.min_x:g} {viewbox.min_y:g} {viewbox.size:g} {viewbox.size:g}">'
        f'<path d="{d}" fill="black" fill-rule="nonzero"/></svg>'
    )


def _contact_sheet(rows: list[list[str]], viewbox: Viewbox, cell: float = 96.0) -> str:
    """One <g> per glyph, laid out row-major on a cell grid."""
    cols = max((len(r) for r in rows), default=0)
    scale = cell / viewbox.size
    body = []
    for r, row in enumerate(rows):
        for c, d in enumerate(row):
            path = f'<path d="{d}" fill="black" fill-rule="nonzero"/>' if d else ""
            body.append(
                f'<g transform="translate({c * cell:g} {r * cell:g}) scale({scale:g}) '
                f'translate({-viewbox.min_x:g} {-viewbox.min_y:g})">' + path + "</g>"
            )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {cols * cell:g} {max(len(rows), 1) * cell:g}">' + "".join(body) + "</svg>"
    )


def _parse_labels(text: str) -> list[int]:
    if text == "all":
        return list(range(len(LABEL_CHARS)))
    return [char_to_label(c) for c in text]


def _run_config(args) -> TrainRunConfig:
    cfg = load_config(args.config, TrainRunConfig) if args.config else TrainRunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "max_steps", None) is not None:
        overrides["max_steps"] = args.max_steps
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _load_vae(run_dir: str) -> ConvVae:
    vae = ConvVae(load_config(os.path.join(run_dir, "vae.cfg"), VaeConfig), np.random.default_rng(0))
    vae.load_state_dict(load_tensors(os.path.join(run_dir, "vae.ckpt")))
    return vae


def _load_decoder(run_dir: str) -> SvgDecoder:
    decoder = SvgDecoder(
        load_config(os.path.join(run_dir, "decoder.cfg"), DecoderConfig), np.random.default_rng(0)
    )
    decoder.load_state_dict(load_tensors(os.path.join(run_dir, "decoder.ckpt")))
    return decoder


def _decode_with_confidence(bundle: ModelBundle, z, labels, n, temperature, rng):
    svgs, confidences = [], []
    for label in labels:
        glyph = best_of_n(
            bundle.decoder, bundle.vae, z, label, n=n, rng=rng,
            temperature=temperature, viewbox=bundle.viewbox,
        )
        svgs.append(glyph_to_path(to_absolute(glyph)))
        raster = render(to_absolute(glyph), bundle.viewbox).pixels
        confidences.append(latent.confidence(bundle.vae.encode(raster, label)))
    return svgs, confidences


# -- subcommands -------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .blockfont import SyntheticSpec

    if args.specs:
        with open(args.specs) as f:
            spec_dicts = json.load(f)
    else:
        spec_dicts = DEFAULT_SPECS
    specs = [SyntheticSpec(**d) for d in spec_dicts]
    corpus = ds.synthesize(specs, _parse_labels(args.labels), seed=args.seed or 0)
    ds.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} glyphs ({len(specs)} fonts) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    try:
        corpus = ds.ingest(args.svg_dir)
    except ds.NoValidGlyphs as exc:
        return _fail(str(exc))
    ds.save_corpus(corpus, args.out)
    print(f"ingested {len(corpus)} glyphs from {args.svg_dir} to {args.out}")
    for name, reason in corpus.skipped:
        print(f"skipped {name}: {reason}")
    return 0


def cmd_split(args) -> int:
    corpus = ds.load_corpus(args.corpus)
    try:
        train, test = ds.split(corpus, ratio=args.ratio, seed=args.seed or 0)
    except ValueError as exc:
        return _fail(str(exc))
    ds.save_corpus(train, args.train_out)
    ds.save_corpus(test, args.test_out)
    print(f"split {len(corpus)} -> train {len(train)}, test {len(test)}")
    return 0


def cmd_train_vae(args) -> int:
    corpus = ds.load_corpus(args.corpus)
    run = _run_config(args)
    vae_config = load_config(args.vae_config, VaeConfig) if args.vae_config else VaeConfig()
    _, history = train_vae(corpus, run, vae_config, args.out)
    last = history[-1]
    print(
        f"trained vae for {len(history)} steps: total {last['total']:.3f}, "
        f"bce/pixel {last['bce_per_pixel']:.4f} -> {args.out}"
    )
    return 0


def cmd_train_decoder(args) -> int:
    corpus = ds.load_corpus(args.corpus)
    run = _run_config(args)
    vae = _load_vae(args.vae)
    decoder_config = (
        load_config(args.decoder_config, DecoderConfig)
        if args.decoder_config
        else DecoderConfig(z_dim=vae.config.z_dim)
    )
    _, history = train_decoder(corpus, vae, run, decoder_config, args.out)
    last = history[-1]
    print(
        f"trained decoder for {len(history)} steps: loss/step {last['total_per_step']:.3f} "
        f"-> {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    corpus = ds.load_corpus(args.corpus)
    vae = _load_vae(args.vae)
    decoder = _load_decoder(args.decoder)
    os.makedirs(args.out, exist_ok=True)
    table = nll_by_class(decoder, vae, corpus, os.path.join(args.out, "nll_by_class.csv"))
    print(f"nll_by_class.csv: {len(table)} classes")
    chars = args.lengths_for if args.lengths_for else sorted({LABEL_CHARS[e.label] for e in corpus.entries})
    summary = []
    for char in chars:
        label = char_to_label(char)
        points = nll_vs_length(
            decoder, vae, corpus, label,
            os.path.join(args.out, f"nll_vs_length_{_char_kind(char)}_{char}.csv"),
        )
        lengths = np.array([p[0] for p in points], dtype=np.float64)
        nlls = np.array([p[1] for p in points], dtype=np.float64)
        cut = np.median(lengths)
        short, long_ = nlls[lengths <= cut], nlls[lengths > cut]
        summary.append(
            (char, len(points), float(short.var()) if len(short) else float("nan"),
             float(long_.var()) if len(long_) else float("nan"))
        )
    with open(os.path.join(args.out, "length_variance.csv"), "w") as f:
        f.write("char,count,short_nll_var,long_nll_var\n")
        for char, count, sv, lv in summary:
            f.write(f"{char},{count},{sv},{lv}\n")
    print(f"wrote {len(chars)} nll_vs_length CSVs and length_variance.csv to {args.out}")
    return 0


def cmd_bundle(args) -> int:
    corpus = ds.load_corpus(args.corpus)
    concepts = {}
    if args.concepts:
        with open(args.concepts) as f:
            concepts = {k: np.asarray(v, dtype=np.float64) for k, v in json.load(f).items()}
    save_bundle(
        args.out, _load_vae(args.vae), _load_decoder(args.decoder),
        corpus.viewbox, corpus.rescale, concepts,
    )
    print(f"wrote bundle ({len(concepts)} concepts) to {args.out}")
    return 0


def cmd_propagate(args) -> int:
    bundle = load_bundle(args.bundle)
    try:
        label = char_to_label(args.label)
        glyph = normalize(Glyph(label, parse_path(_read_path_data(args.svg))))
    except (KeyError, ValueError) as exc:
        return _fail(str(exc))
    targets = _parse_labels(args.targets)
    z = latent.style_z(bundle.vae, [(glyph, label)], viewbox=bundle.viewbox)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    svgs, confidences = _decode_with_confidence(bundle, z, targets, args.n, args.temperature, rng)
    os.makedirs(args.out, exist_ok=True)
    for t, d in zip(targets, svgs):
        with open(os.path.join(args.out, _glyph_filename(LABEL_CHARS[t])), "w") as f:
            f.write(_svg_document(d, bundle.viewbox))
    with open(os.path.join(args.out, "contact_sheet.svg"), "w") as f:
        f.write(_contact_sheet([svgs], bundle.viewbox))
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump(
            {"z": z.tolist(), "targets": [LABEL_CHARS[t] for t in targets], "confidences": confidences},
            f, indent=2,
        )
    print(f"propagated to {len(targets)} glyphs -> {args.out}")
    return 0


def cmd_apply_concept(args) -> int:
    bundle = load_bundle(args.bundle)
    if args.concept not in bundle.concepts:
        return _fail(f"unknown concept {args.concept!r}; bundle has {sorted(bundle.concepts)}")
    if (args.z_file is None) == (args.svg is None):
        return _fail("provide exactly one of --z-file or --svg with --label")
    try:
        if args.z_file:
            with open(args.z_file) as f:
                z = np.asarray(json.load(f), dtype=np.float64)
        else:
            label = char_to_label(args.label)
            glyph = normalize(Glyph(label, parse_path(_read_path_data(args.svg))))
            z = latent.style_z(bundle.vae, [(glyph, label)], viewbox=bundle.viewbox)
    except (KeyError, ValueError) as exc:
        return _fail(str(exc))
    alphas = [float(a) for a in args.alphas.split(",")]
    targets = _parse_labels(args.targets if args.targets != "source" else args.label)
    direction = latent.ConceptDirection(args.concept, bundle.concepts[args.concept])
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, z_alpha in enumerate(latent.apply_concept(z, direction, alphas)):
        svgs, _ = _decode_with_confidence(bundle, z_alpha, targets, args.n, args.temperature, rng)
        rows.append(svgs)
        for t, d in zip(targets, svgs):
            name = f"alpha{i}_{_char_kind(LABEL_CHARS[t])}_{LABEL_CHARS[t]}.svg"
            with open(os.path.join(args.out, name), "w") as f:
                f.write(_svg_document(d, bundle.viewbox))
    with open(os.path.join(args.out, "contact_sheet.svg"), "w") as f:
        f.write(_contact_sheet(rows, bundle.viewbox))
    print(f"swept {len(alphas)} alphas x {len(targets)} targets -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    serve(args.bundle, port=args.port, host=args.host, timeout_s=args.timeout)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic block-font corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", default="all", help="characters to include, or 'all'")
    p.add_argument("--specs", help="JSON file with a list of synthetic font spec dicts")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="build a corpus from a directory of SVG files")
    p.add_argument("--svg-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("split", help="deterministic font-level train/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train-vae", help="train the image VAE on corpus rasters")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainRunConfig file")
    p.add_argument("--vae-config", help="VaeConfig file (default: full size)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(fn=cmd_train_vae)

    p = sub.add_parser("train-decoder", help="train the sequence decoder against a frozen VAE")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vae", required=True, help="directory with vae.ckpt + vae.cfg")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TrainRunConfig file")
    p.add_argument("--decoder-config", help="DecoderConfig file (default: full size)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(fn=cmd_train_decoder)

    p = sub.add_parser("eval", help="emit NLL-by-class and NLL-vs-length CSVs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--decoder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lengths-for", help="characters to emit length curves for (default: all present)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bundle", help="assemble a service bundle from trained runs")
    p.add_argument("--vae", required=True)
    p.add_argument("--decoder", required=True)
    p.add_argument("--corpus", required=True, help="corpus dir supplying viewbox and rescale")
    p.add_argument("--out", required=True)
    p.add_argument("--concepts", help="JSON file mapping concept name -> z-space vector")
    p.set_defaults(fn=cmd_bundle)

    p = sub.add_parser("propagate", help="propagate one glyph's style to target characters")
    p.add_argument("--bundle", required=True)
    p.add_argument("--svg", required=True, help="file with a path d string or an SVG document")
    p.add_argument("--label", required=True, help="character of the source glyph")
    p.add_argument("--targets", default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_propagate)

    p = sub.add_parser(
        "apply_concept", aliases=["apply-concept"], help="decode a concept-direction sweep"
    )
    p.add_argument("--bundle", required=True)
    p.add_argument("--concept", required=True)
    p.add_argument(
        "--alphas", default="-1,0,1",
        help="comma-separated alpha values; use --alphas=-1,0,1 for negative leads",
    )
    p.add_argument("--z-file", help="JSON file with a z vector")
    p.add_argument("--svg", help="source glyph file (alternative to --z-file)")
    p.add_argument("--label", default="A", help="source character when --svg is given")
    p.add_argument("--targets", default="source", help="characters to decode, 'all', or 'source'")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_apply_concept)

    p = sub.add_parser("serve", help="serve a model bundle over HTTP")
    p.add_argument("--bundle", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
