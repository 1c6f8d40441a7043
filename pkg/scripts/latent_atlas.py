"""Project a corpus into the top-2 latent principal directions as an SVG atlas.

Every glyph is drawn as a small outline at its projected position, colored by
font, so style clusters and outliers are visible at a glance.  Reads a corpus
directory and a training run directory (vae.ckpt + vae.cfg).
"""

import argparse
import os
import sys

import numpy as np

from glyphgen.checkpoint import load_config, load_tensors
from glyphgen.dataset import load_corpus
from glyphgen.latent import project_2d
from glyphgen.svgpath import glyph_to_path, to_absolute
from glyphgen.training import encode_corpus_mu
from glyphgen.vae import ConvVae, VaeConfig

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
THUMB = 28.0
CANVAS = 640.0
MARGIN = 40.0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--vae", required=True, help="training run dir with vae.ckpt/vae.cfg")
    ap.add_argument("--out", required=True, help="output .svg path")
    ap.add_argument("--max-glyphs", type=int, default=300)
    args = ap.parse_args(argv)

    corpus = load_corpus(args.corpus)
    entries = corpus.entries[: args.max_glyphs]
    cfg = load_config(os.path.join(args.vae, "vae.cfg"), VaeConfig)
    vae = ConvVae(cfg, np.random.default_rng(0))
    vae.load_state_dict(load_tensors(os.path.join(args.vae, "vae.ckpt")))

    sub = type(corpus)(entries, corpus.rescale, corpus.viewbox, font_specs=corpus.font_specs)
    mu = encode_corpus_mu(vae, sub).astype(np.float64)
    pos = project_2d(list(mu))

    span = max(float(np.abs(pos).max()), 1e-9)
    scale = (CANVAS / 2 - MARGIN) / span
    colors = {fid: PALETTE[i % len(PALETTE)] for i, fid in enumerate(corpus.font_ids())}

    cells = []
    vb = corpus.viewbox
    for e, (px, py) in zip(entries, pos):
        x = CANVAS / 2 + px * scale - THUMB / 2
        y = CANVAS / 2 + py * scale - THUMB / 2
        d = glyph_to_path(to_absolute(e.glyph))
        transform = (
            f"translate({x:.2f} {y:.2f}) scale({THUMB / vb.size:.4f}) "
            f"translate({-vb.min_x:.4f} {-vb.min_y:.4f})"
        )
        cells.append(
            f'  <g transform="{transform}"><path d="{d}" fill="{colors[e.font_id]}" '
            f'fill-opacity="0.75"/></g>'
        )

    body = "\n".join(cells)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {CANVAS:.0f} {CANVAS:.0f}">\n'
        f'  <rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
    )
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"wrote {args.out}: {len(entries)} glyphs, {len(colors)} fonts")
    return 0


if __name__ == "__main__":
    sys.exit(main())
