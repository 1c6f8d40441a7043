"""Scanline rasterization of glyphs to 64x64 grayscale images.

Contours are flattened to polylines (adaptive cubic subdivision), filled with
the nonzero winding rule on a 2x supersampled grid, and box-filtered down.
Sample points sit at pixel centers; edges crossing a scanline are counted
half-open in y so shared vertices are never double-counted.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .svgpath import Command, CommandKind, CoordinateMode, Glyph, Point, split_contours, to_absolute

IMAGE_SIZE = 64
SUPERSAMPLE = 2
# cubic flattening tolerance as a fraction of the viewbox size
FLATTEN_TOL_REL = 0.05


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class Viewbox:
    min_x: float
    min_y: float
    size: float

    def __post_init__(self) -> None:
        if not (self.size > 0 and math.isfinite(self.size)):
            raise ValueError(f"viewbox size must be positive, got {self.size}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.min_x, self.min_y, self.size)


@dataclass(frozen=True)
class Raster:
    pixels: np.ndarray  # (64, 64) float32 in [0, 1], row = y
    viewbox: Viewbox

    def __post_init__(self) -> None:
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"expected {IMAGE_SIZE}x{IMAGE_SIZE}, got {self.pixels.shape}")


def _dist_to_segment(p: Point, a: Point, b: Point) -> float:
    dx, dy = b.x - a.x, b.y - a.y
    l2 = dx * dx + dy * dy
    if l2 <= 1e-30:
        return math.hypot(p.x - a.x, p.y - a.y)
    t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / l2
    t = min(1.0, max(0.0, t))
    return math.hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy))


def flatten_cubic(
    p0: Point, c1: Point, c2: Point, p1: Point, tolerance: float, max_depth: int = 16
) -> list[Point]:
    """Polyline approximation of a cubic, endpoints preserved exactly.

    The curve lies in the convex hull of its control points, so it deviates
    from the chord by at most the larger control-to-chord distance; subdivide
    until that bound is within tolerance.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    out = [p0]
    _flatten_rec(p0, c1, c2, p1, tolerance, max_depth, out)
    out.append(p1)
    return out


def _flatten_rec(
    p0: Point, c1: Point, c2: Point, p1: Point, tol: float, depth: int, out: list[Point]
) -> None:
    d = max(_dist_to_segment(c1, p0, p1), _dist_to_segment(c2, p0, p1))
    if d <= tol or depth <= 0:
        return
    # de Casteljau split at t = 1/2
    m = lambda a, b: Point(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    ab, bc, cd = m(p0, c1), m(c1, c2), m(c2, p1)
    abc, bcd = m(ab, bc), m(bc, cd)
    mid = m(abc, bcd)
    _flatten_rec(p0, ab, abc, mid, tol, depth - 1, out)
    out.append(mid)
    _flatten_rec(mid, bcd, cd, p1, tol, depth - 1, out)


def _contour_polylines(commands: tuple[Command, ...], tolerance: float) -> list[np.ndarray]:
    polys = []
    for c in split_contours(commands):
        pts = [c.start]
        cur = c.start
        for seg in c.segments:
            if seg.kind == CommandKind.LINE_TO:
                pts.append(seg.endpoint)
            else:
                c1, c2, end = seg.points
                pts.extend(flatten_cubic(cur, c1, c2, end, tolerance)[1:])
            cur = seg.endpoint
        if len(pts) >= 3:
            polys.append(np.array([(p.x, p.y) for p in pts], dtype=np.float64))
    return polys


def _scanline_fill(polys: list[np.ndarray], n: int) -> np.ndarray:
    """Nonzero-winding fill sampled at the n x n grid of pixel centers."""
    img = np.zeros((n, n), dtype=np.float64)
    if not polys:
        return img
    segs = []
    for poly in polys:
        nxt = np.roll(poly, -1, axis=0)
        segs.append(np.concatenate([poly, nxt], axis=1))
    e = np.concatenate(segs)  # (m, 4): x0 y0 x1 y1
    x0, y0, x1, y1 = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
    keep = y0 != y1
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    if x0.size == 0:
        return img
    direction = np.where(y1 > y0, 1, -1)
    ylo, yhi = np.minimum(y0, y1), np.maximum(y0, y1)
    slope = (x1 - x0) / (y1 - y0)
    for j in range(n):
        ys = j + 0.5
        active = (ylo <= ys) & (ys < yhi)
        if not np.any(active):
            continue
        xs = x0[active] + (ys - y0[active]) * slope[active]
        ds = direction[active]
        order = np.argsort(xs, kind="stable")
        xs, ds = xs[order], ds[order]
        winding = np.cumsum(ds)
        for i in range(len(xs) - 1):
            if winding[i] == 0:
                continue
            lo = int(np.ceil(xs[i] - 0.5))
            hi = int(np.ceil(xs[i + 1] - 0.5))
            if hi > lo:
                img[j, max(lo, 0) : min(hi, n)] = 1.0
    return img


def render(glyph: Glyph, viewbox: Viewbox, supersample: int = SUPERSAMPLE) -> Raster:
    """Render the glyph into the viewbox; a glyph with no closed contour of
    3+ points yields an all-zero raster (not an error)."""
    g = to_absolute(glyph) if glyph.coordinate_mode == CoordinateMode.RELATIVE else glyph
    tol = FLATTEN_TOL_REL * viewbox.size
    polys = _contour_polylines(g.commands, tol)
    n = IMAGE_SIZE * supersample
    scale = n / viewbox.size
    mapped = [
        np.column_stack(((p[:, 0] - viewbox.min_x) * scale, (p[:, 1] - viewbox.min_y) * scale))
        for p in polys
    ]
    fine = _scanline_fill(mapped, n)
    pixels = fine.reshape(IMAGE_SIZE, supersample, IMAGE_SIZE, supersample).mean(axis=(1, 3))
    return Raster(pixels.astype(np.float32), viewbox)


def default_viewbox(points: np.ndarray, expand: float = 0.125) -> Viewbox:
    """Corpus-wide square render region: the bounding box of the 1st..99th
    percentile of all contour points, expanded `expand` per side, squared up
    around the longer axis."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyCorpus("no contour points")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got {pts.shape}")
    lo_x, hi_x = np.percentile(pts[:, 0], [1.0, 99.0])
    lo_y, hi_y = np.percentile(pts[:, 1], [1.0, 99.0])
    w, h = hi_x - lo_x, hi_y - lo_y
    lo_x, hi_x = lo_x - expand * w, hi_x + expand * w
    lo_y, hi_y = lo_y - expand * h, hi_y + expand * h
    size = max(hi_x - lo_x, hi_y - lo_y)
    if size <= 0:
        size = 1.0
    # center the shorter axis inside the square window
    min_x = lo_x - 0.5 * (size - (hi_x - lo_x))
    min_y = lo_y - 0.5 * (size - (hi_y - lo_y))
    return Viewbox(float(min_x), float(min_y), float(size))


def ink_coverage(raster: Raster) -> float:
    return float(raster.pixels.mean())


def to_png_bytes(raster: Raster) -> bytes:
    from PIL import Image

    arr = np.clip(np.rint(raster.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_png(raster: Raster, path: str) -> None:
    with open(path, "wb") as f:
        f.write(to_png_bytes(raster))


def glyph_points(glyph: Glyph) -> np.ndarray:
    """All coordinate pairs (control points included) as an (N, 2) array."""
    g = to_absolute(glyph) if glyph.coordinate_mode == CoordinateMode.RELATIVE else glyph
    pts = [(p.x, p.y) for cmd in g.commands for p in cmd.points]
    return np.array(pts, dtype=np.float64) if pts else np.zeros((0, 2))
