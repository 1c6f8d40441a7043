"""Build a small serve-able bundle end to end.

Synthesizes a block-letter corpus, trains the image encoder and the sequence
decoder at reduced size, derives weight/slant/width concept directions from
paired synthetic families, and writes a bundle directory that `glyphgen serve`
can load.  Defaults produce a usable demo in a few minutes on a laptop CPU;
--quick cuts the corpus to digits and trims steps for smoke testing.
"""

import argparse
import dataclasses
import sys
import time

from glyphgen.blockfont import SyntheticSpec
from glyphgen.dataset import synthesize
from glyphgen.latent import concept_direction
from glyphgen.service import save_bundle
from glyphgen.svg_decoder import DecoderConfig
from glyphgen.svgpath import char_to_label
from glyphgen.training import TrainRunConfig, train_decoder, train_vae
from glyphgen.vae import VaeConfig

ALL_CHARS = "0123456789" + "".join(chr(ord("A") + i) for i in range(26)) + "".join(
    chr(ord("a") + i) for i in range(26)
)

REGULAR = SyntheticSpec(stroke_weight=0.06)
BOLD = SyntheticSpec(stroke_weight=0.14)
ITALIC = SyntheticSpec(stroke_weight=0.06, slant_deg=12.0)
CONDENSED = SyntheticSpec(stroke_weight=0.06, width_scale=0.6)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="bundle directory to create")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--vae-steps", type=int, default=300)
    ap.add_argument("--decoder-steps", type=int, default=600)
    ap.add_argument("--quick", action="store_true", help="digits only, fewer steps")
    args = ap.parse_args(argv)

    chars = "0123456789" if args.quick else ALL_CHARS
    vae_steps = 120 if args.quick else args.vae_steps
    dec_steps = 250 if args.quick else args.decoder_steps
    labels = [char_to_label(c) for c in chars]

    t0 = time.perf_counter()
    corpus = synthesize([REGULAR, BOLD], labels, seed=args.seed)
    print(f"corpus: {len(corpus)} glyphs over {len(labels)} classes")

    run = TrainRunConfig(
        epochs=100_000, vae_batch=32, decoder_batch=64, lr=3e-3, seed=args.seed,
        max_steps=vae_steps,
    )
    vae, hist = train_vae(corpus, run, vae_config=VaeConfig.small())
    print(f"vae: {len(hist)} steps, bce/pixel {hist[-1]['bce_per_pixel']:.4f}")

    dec_run = dataclasses.replace(run, max_steps=dec_steps)
    decoder, hist = train_decoder(corpus, vae, dec_run, decoder_config=DecoderConfig.small())
    print(f"decoder: {len(hist)} steps, nll/step {hist[-1]['total_per_step']:.3f}")

    def pairs(c):
        return [(e.glyph, e.label) for e in c.entries]

    bold = synthesize([BOLD], labels, seed=args.seed)
    italic = synthesize([ITALIC], labels, seed=args.seed)
    condensed = synthesize([CONDENSED], labels, seed=args.seed)
    base = synthesize([REGULAR], labels, seed=args.seed)
    concepts = {
        name: concept_direction(vae, pairs(c), pairs(base), name, viewbox=corpus.viewbox).c
        for name, c in (("bold", bold), ("italic", italic), ("condensed", condensed))
    }

    save_bundle(args.out, vae, decoder, corpus.viewbox, corpus.rescale, concepts)
    print(f"bundle written to {args.out} in {time.perf_counter() - t0:.0f}s")
    print(f"serve it with: glyphgen serve --bundle {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
