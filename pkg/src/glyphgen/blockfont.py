"""Parametric block-letter glyph generator for synthetic corpora.

Characters are segment compositions on a 3x5 grid; every segment is swept
into a stroke rectangle of the family's weight, sheared for slant, and
scaled for width.  The first rectangle of each glyph closes with a
control-collinear cubic so sequences exercise the curve branch of the codec.
Strokes may overlap (nonzero winding keeps the union filled) but are never
nested, so every glyph rasterizes identically before and after normalize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .svgpath import LABEL_CHARS, Command, CoordinateMode, Glyph, Point, cubic_to, line_to, move_to

# em-grid placement: 3 columns across [0.15, 0.85], 5 rows down [0.1, 0.9]
GRID_X0 = 0.15
GRID_DX = 0.35
GRID_Y0 = 0.1
GRID_DY = 0.2

REGULAR_WEIGHT = 0.06
BOLD_WEIGHT = 0.14
BOLD_THRESHOLD = 0.10
ITALIC_THRESHOLD = 5.0
CONDENSED_THRESHOLD = 0.75
SERIF_HALF_LEN = 0.35  # grid units each side of a vertical stroke's foot


@dataclass(frozen=True)
class SyntheticSpec:
    """One synthetic family: weight, slant, width and serif axes."""

    stroke_weight: float = REGULAR_WEIGHT
    slant_deg: float = 0.0
    width_scale: float = 1.0
    serif: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.stroke_weight <= 0.25:
            raise ValueError(f"stroke_weight outside (0, 0.25]: {self.stroke_weight}")
        if abs(self.slant_deg) > 30.0:
            raise ValueError(f"slant_deg outside [-30, 30]: {self.slant_deg}")
        if not 0.4 <= self.width_scale <= 1.5:
            raise ValueError(f"width_scale outside [0.4, 1.5]: {self.width_scale}")


def is_bold(spec: SyntheticSpec) -> bool:
    return spec.stroke_weight >= BOLD_THRESHOLD


def is_italic(spec: SyntheticSpec) -> bool:
    return spec.slant_deg >= ITALIC_THRESHOLD


def is_condensed(spec: SyntheticSpec) -> bool:
    return spec.width_scale <= CONDENSED_THRESHOLD


# 7-segment style primitives on the grid, (x0, y0, x1, y1)
_A = (0, 0, 2, 0)  # top bar
_B = (2, 0, 2, 2)  # upper right
_C = (2, 2, 2, 4)  # lower right
_D = (0, 4, 2, 4)  # bottom bar
_E = (0, 2, 0, 4)  # lower left
_F = (0, 0, 0, 2)  # upper left
_G = (0, 2, 2, 2)  # middle bar
_FL = (0, 0, 0, 4)  # full left
_FR = (2, 0, 2, 4)  # full right
_CV = (1, 0, 1, 4)  # center vertical
_RING = (_A, _B, _C, _D, _E, _F)

SEGMENTS: dict[str, tuple[tuple[int, int, int, int], ...]] = {
    "0": _RING,
    "1": (_B, _C),
    "2": (_A, _B, _G, _E, _D),
    "3": (_A, _B, _G, _C, _D),
    "4": (_F, _G, _B, _C),
    "5": (_A, _F, _G, _C, _D),
    "6": (_A, _F, _G, _E, _C, _D),
    "7": (_A, _B, _C),
    "8": (_A, _B, _C, _D, _E, _F, _G),
    "9": (_A, _B, _F, _G, _C, _D),
    "A": (_A, _FL, _FR, _G),
    "B": (_A, _B, _C, _D, _E, _F, _G),
    "C": (_A, _FL, _D),
    "D": _RING,
    "E": (_A, _G, _D, _FL),
    "F": (_A, _G, _FL),
    "G": (_A, _FL, _D, _C, (1, 2, 2, 2)),
    "H": (_FL, _FR, _G),
    "I": (_A, _CV, _D),
    "J": (_FR, _D, (0, 3, 0, 4)),
    "K": (_FL, (0, 2, 2, 0), (0, 2, 2, 4)),
    "L": (_FL, _D),
    "M": (_FL, _FR, (0, 0, 1, 2), (2, 0, 1, 2)),
    "N": (_FL, _FR, (0, 0, 2, 4)),
    "O": _RING,
    "P": (_FL, _A, _B, _G),
    "Q": _RING + ((1, 3, 2, 4),),
    "R": (_FL, _A, _B, _G, (1, 2, 2, 4)),
    "S": (_A, _F, _G, _C, _D),
    "T": (_A, _CV),
    "U": (_FL, _FR, _D),
    "V": ((0, 0, 1, 4), (2, 0, 1, 4)),
    "W": (_FL, _FR, (0, 4, 1, 2), (2, 4, 1, 2)),
    "X": ((0, 0, 2, 4), (2, 0, 0, 4)),
    "Y": ((0, 0, 1, 2), (2, 0, 1, 2), (1, 2, 1, 4)),
    "Z": (_A, (2, 0, 0, 4), _D),
}


def _char_segments(char: str) -> tuple[tuple[float, float, float, float], ...]:
    """Lowercase reuses the uppercase composition at x-height, bottom-aligned."""
    if char in SEGMENTS:
        return SEGMENTS[char]
    upper = SEGMENTS[char.upper()]
    return tuple((x0, 2.0 + y0 / 2.0, x1, 2.0 + y1 / 2.0) for x0, y0, x1, y1 in upper)


def _grid_to_em(gx: float, gy: float) -> tuple[float, float]:
    return GRID_X0 + gx * GRID_DX, GRID_Y0 + gy * GRID_DY


def _stroke_corners(
    seg: tuple[float, float, float, float], weight: float
) -> list[tuple[float, float]]:
    """Sweep a segment into a capped rectangle, clockwise under y-down."""
    x0, y0 = _grid_to_em(seg[0], seg[1])
    x1, y1 = _grid_to_em(seg[2], seg[3])
    length = math.hypot(x1 - x0, y1 - y0)
    ux, uy = (x1 - x0) / length, (y1 - y0) / length
    nx, ny = -uy, ux
    c = weight / 2.0
    ax, ay = x0 - ux * c, y0 - uy * c
    bx, by = x1 + ux * c, y1 + uy * c
    return [
        (ax - nx * c, ay - ny * c),
        (bx - nx * c, by - ny * c),
        (bx + nx * c, by + ny * c),
        (ax + nx * c, ay + ny * c),
    ]


def _transform(pt: tuple[float, float], spec: SyntheticSpec) -> Point:
    x, y = pt
    x = 0.5 + (x - 0.5) * spec.width_scale
    x = x + math.tan(math.radians(spec.slant_deg)) * (0.5 - y)
    return Point(x, y)


def _serif_segments(
    segments: tuple[tuple[float, float, float, float], ...],
) -> list[tuple[float, float, float, float]]:
    feet = []
    for x0, y0, x1, y1 in segments:
        if x0 == x1 and max(y0, y1) == 4:
            feet.append((x0 - SERIF_HALF_LEN, 4.0, x0 + SERIF_HALF_LEN, 4.0))
    return feet


def synth_glyph(spec: SyntheticSpec, label: int) -> Glyph:
    """Absolute-coordinate glyph for one character of the family."""
    char = LABEL_CHARS[label]
    segments = list(_char_segments(char))
    if spec.serif:
        segments += _serif_segments(tuple(segments))
    commands: list[Command] = []
    for i, seg in enumerate(segments):
        corners = [_transform(p, spec) for p in _stroke_corners(seg, spec.stroke_weight)]
        commands.append(move_to(corners[0].x, corners[0].y))
        commands.append(line_to(corners[1].x, corners[1].y))
        commands.append(line_to(corners[2].x, corners[2].y))
        commands.append(line_to(corners[3].x, corners[3].y))
        first, last = corners[0], corners[3]
        if i == 0:
            c1 = Point(last.x + (first.x - last.x) / 3.0, last.y + (first.y - last.y) / 3.0)
            c2 = Point(last.x + 2.0 * (first.x - last.x) / 3.0, last.y + 2.0 * (first.y - last.y) / 3.0)
            commands.append(cubic_to(c1, c2, first))
        else:
            commands.append(line_to(first.x, first.y))
    return Glyph(label, tuple(commands), CoordinateMode.ABSOLUTE)


def label_set() -> list[int]:
    """All 62 labels in label order."""
    return list(range(62))


__all__ = [
    "SyntheticSpec",
    "synth_glyph",
    "label_set",
    "is_bold",
    "is_italic",
    "is_condensed",
    "REGULAR_WEIGHT",
    "BOLD_WEIGHT",
]
