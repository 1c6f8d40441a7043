"""Latent-space tools over a frozen VAE and decoder.

Style propagation encodes example glyphs to their posterior means, averages
them, and decodes the full character set from the shared z.  Concept
directions are differences of set means; sweeps and interpolations are exact
affine operations with no model involvement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import Viewbox, default_viewbox, glyph_points, render
from .svg_decoder import SvgDecoder, best_of_n
from .svgpath import CoordinateMode, Glyph, to_absolute
from .vae import ConvVae, LatentStyle


class EmptyInput(ValueError):
    pass


class TooFewGlyphs(ValueError):
    pass


class EmptySet(ValueError):
    pass


class BadSteps(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


@dataclass(frozen=True)
class ConceptDirection:
    name: str
    c: np.ndarray  # (z_dim,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64))
        if self.c.ndim != 1:
            raise ValueError(f"c must be a vector, got shape {self.c.shape}")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("c must be finite")


@dataclass(frozen=True)
class StyleReport:
    z: list = field(default_factory=list)  # per-character (z_dim,) vectors
    variance: float = 0.0

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


def _absolute(glyph: Glyph) -> Glyph:
    if glyph.coordinate_mode == CoordinateMode.RELATIVE:
        return to_absolute(glyph)
    return glyph


def _encode_mu(
    vae: ConvVae, glyphs: list[tuple[Glyph, int]], viewbox: Viewbox | None
) -> np.ndarray:
    """Posterior means of rendered glyphs, (N, z_dim) float64."""
    rasters = []
    labels = []
    for glyph, label in glyphs:
        ab = _absolute(glyph)
        box = viewbox or default_viewbox(glyph_points(ab))
        rasters.append(render(ab, box).pixels)
        labels.append(label)
    mu, _ = vae.encode_batch(np.stack(rasters), np.asarray(labels, dtype=np.int64))
    return mu.astype(np.float64)


def style_z(
    vae: ConvVae, glyphs: list[tuple[Glyph, int]], viewbox: Viewbox | None = None
) -> np.ndarray:
    """Average posterior mean over the example glyphs."""
    if not glyphs:
        raise EmptyInput("style_z needs at least one glyph")
    return _encode_mu(vae, glyphs, viewbox).mean(axis=0)


def propagate(
    vae: ConvVae,
    decoder: SvgDecoder,
    z: np.ndarray,
    targets: list[int],
    n: int = 10,
    rng: np.random.Generator | None = None,
    temperature: float = 1.0,
    viewbox: Viewbox | None = None,
) -> list[Glyph]:
    """Best-of-n decode of one z for every target label, in target order."""
    rng = rng or np.random.default_rng(0)
    return [
        best_of_n(decoder, vae, z, label, n=n, rng=rng, temperature=temperature, viewbox=viewbox)
        for label in targets
    ]


def consistency_variance(
    vae: ConvVae, generated: list[tuple[Glyph, int]], viewbox: Viewbox | None = None
) -> StyleReport:
    """Re-encode generated glyphs; mean per-dim variance of their z's."""
    if len(generated) < 2:
        raise TooFewGlyphs(f"need >= 2 glyphs, got {len(generated)}")
    mu = _encode_mu(vae, generated, viewbox)
    return StyleReport(z=list(mu), variance=float(mu.var(axis=0).mean()))


def concept_direction(
    vae: ConvVae,
    positives: list[tuple[Glyph, int]],
    negatives: list[tuple[Glyph, int]],
    name: str = "concept",
    viewbox: Viewbox | None = None,
) -> ConceptDirection:
    """Difference of set-mean z's, pointing from negatives toward positives."""
    if not positives or not negatives:
        raise EmptySet("both example sets must be non-empty")
    c = style_z(vae, positives, viewbox) - style_z(vae, negatives, viewbox)
    return ConceptDirection(name=name, c=c)


def apply_concept(
    z: np.ndarray, concept: ConceptDirection | np.ndarray, alphas: list[float]
) -> list[np.ndarray]:
    """z + alpha * c for each alpha, order preserved."""
    z = np.asarray(z, dtype=np.float64)
    c = concept.c if isinstance(concept, ConceptDirection) else np.asarray(concept, dtype=np.float64)
    return [z + float(a) * c for a in alphas]


def interpolate(z_a: np.ndarray, z_b: np.ndarray, steps: int) -> list[np.ndarray]:
    """steps points from z_a to z_b inclusive, evenly spaced."""
    if steps < 2:
        raise BadSteps(f"steps must be >= 2, got {steps}")
    a = np.asarray(z_a, dtype=np.float64)
    b = np.asarray(z_b, dtype=np.float64)
    return [(1.0 - t) * a + t * b for t in np.linspace(0.0, 1.0, steps)]


def confidence(latent: LatentStyle) -> float:
    """Mean posterior variance; lower means a more confident style read."""
    return float(np.mean(latent.sigma.astype(np.float64) ** 2))


def project_2d(z_list) -> np.ndarray:
    """Mean-centered PCA projection onto the top two components, (N, 2).

    Sign convention: each component's largest-magnitude loading is positive.
    """
    pts = np.asarray(z_list, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"expected (N, z_dim), got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise TooFewPoints(f"need >= 2 points, got {pts.shape[0]}")
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], pts.shape[1]))])
    for row in comps:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return centered @ comps.T
