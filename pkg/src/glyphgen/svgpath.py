"""SVG path parsing, serialization, and glyph canonicalization.

Glyphs are restricted to four command kinds (MoveTo, LineTo, CubicBezier,
Eos).  H/V/Z commands are lowered at parse time; arcs and quadratics are
rejected.  Canonicalization rewrites every contour to clockwise traversal
(y-down screen convention) starting at its top-most command boundary, in
relative coordinates, with a single trailing Eos.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

# class ids: 0-9 then a-z then A-Z
LABEL_CHARS = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
NUM_CLASSES = len(LABEL_CHARS)
_CHAR_TO_LABEL = {c: i for i, c in enumerate(LABEL_CHARS)}

# geometric closure tolerance for contours, per-coordinate
CLOSE_TOL = 1e-6
# max drawing commands per glyph; the trailing Eos is not counted
MAX_COMMANDS = 50


class PathError(ValueError):
    """Base class for path parsing/validation errors."""


class UnsupportedCommand(PathError):
    def __init__(self, letter: str, offset: int):
        super().__init__(f"unsupported path command {letter!r} at offset {offset}")
        self.letter = letter
        self.offset = offset


class MalformedNumber(PathError):
    def __init__(self, offset: int):
        super().__init__(f"malformed number at offset {offset}")
        self.offset = offset


class EmptyPath(PathError):
    def __init__(self) -> None:
        super().__init__("path contains no commands")
        self.offset = 0


class DegenerateContour(PathError):
    pass


class OpenContour(PathError):
    pass


class TooManyCommands(PathError):
    pass


class CommandKind(enum.IntEnum):
    """Command vocabulary; integer values match the one-hot layout."""

    MOVE_TO = 0
    LINE_TO = 1
    CUBIC_BEZIER = 2
    EOS = 3


_POINT_COUNT = {
    CommandKind.MOVE_TO: 1,
    CommandKind.LINE_TO: 1,
    CommandKind.CUBIC_BEZIER: 3,
    CommandKind.EOS: 0,
}


class CoordinateMode(enum.Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __add__(self, other: "Point") -> "Point":
        return Point(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point") -> "Point":
        return Point(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Command:
    kind: CommandKind
    points: tuple[Point, ...] = ()

    def __post_init__(self) -> None:
        if len(self.points) != _POINT_COUNT[self.kind]:
            raise ValueError(
                f"{self.kind.name} takes {_POINT_COUNT[self.kind]} points, "
                f"got {len(self.points)}"
            )

    @property
    def endpoint(self) -> Point:
        if self.kind == CommandKind.EOS:
            raise ValueError("Eos has no endpoint")
        return self.points[-1]


def move_to(x: float, y: float) -> Command:
    return Command(CommandKind.MOVE_TO, (Point(x, y),))


def line_to(x: float, y: float) -> Command:
    return Command(CommandKind.LINE_TO, (Point(x, y),))


def cubic_to(c1: Point, c2: Point, end: Point) -> Command:
    return Command(CommandKind.CUBIC_BEZIER, (c1, c2, end))


EOS = Command(CommandKind.EOS)


@dataclass(frozen=True)
class Glyph:
    """One character shape: a class label plus an ordered command list."""

    label: int
    commands: tuple[Command, ...]
    coordinate_mode: CoordinateMode = CoordinateMode.ABSOLUTE

    def __post_init__(self) -> None:
        if not 0 <= self.label < NUM_CLASSES:
            raise ValueError(f"label {self.label} outside 0..{NUM_CLASSES - 1}")
        for i, cmd in enumerate(self.commands):
            if cmd.kind == CommandKind.EOS and i != len(self.commands) - 1:
                raise ValueError("Eos may only appear as the final command")

    @property
    def char(self) -> str:
        return LABEL_CHARS[self.label]

    def drawing_commands(self) -> tuple[Command, ...]:
        if self.commands and self.commands[-1].kind == CommandKind.EOS:
            return self.commands[:-1]
        return self.commands


def char_to_label(ch: str) -> int:
    if ch not in _CHAR_TO_LABEL:
        raise KeyError(f"{ch!r} is not in the 62-character class set")
    return _CHAR_TO_LABEL[ch]


# ---------------------------------------------------------------------------
# parsing / serialization

_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_WSP = " \t\r\n,"
_SUPPORTED = set("MmLlCcZzHhVv")
_ALL_COMMAND_LETTERS = set("MmLlCcZzHhVvAaQqSsTt")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_wsp(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in _WSP:
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_wsp()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip_wsp()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_number(self) -> float:
        self.skip_wsp()
        m = _NUMBER_RE.match(self.text, self.pos)
        if m is None:
            raise MalformedNumber(self.pos)
        self.pos = m.end()
        return float(m.group())


def parse_path(d: str) -> tuple[Command, ...]:
    """Parse a path-data string into absolute-mode commands.

    Only M/m, L/l, C/c, H/h, V/v, Z/z are accepted.  H and V are lowered to
    LineTo, Z to an explicit closing LineTo (when the contour is not already
    closed), and implicit command repetition is expanded.  Raises
    UnsupportedCommand / MalformedNumber / EmptyPath with a byte offset.
    """
    sc = _Scanner(d)
    out: list[Command] = []
    cur = Point(0.0, 0.0)
    contour_start = Point(0.0, 0.0)
    letter = ""

    while not sc.at_end():
        ch = sc.peek()
        if ch.isalpha():
            if ch not in _SUPPORTED:
                raise UnsupportedCommand(ch, sc.pos)
            letter = ch
            sc.pos += 1
            if letter in "Zz":
                if not _points_close(cur, contour_start, CLOSE_TOL):
                    out.append(line_to(contour_start.x, contour_start.y))
                cur = contour_start
                letter = ""
                continue
        elif not letter:
            # junk (digits, punctuation) where the first command letter belongs
            raise UnsupportedCommand(ch, sc.pos)

        rel = letter.islower()
        base = letter.upper()
        if base == "M":
            p = _read_point(sc, cur if rel else None)
            out.append(move_to(p.x, p.y))
            cur = contour_start = p
            # subsequent implicit pairs are LineTo per the path grammar
            letter = "l" if rel else "L"
        elif base == "L":
            p = _read_point(sc, cur if rel else None)
            out.append(line_to(p.x, p.y))
            cur = p
        elif base == "H":
            x = sc.take_number()
            p = Point(cur.x + x if rel else x, cur.y)
            out.append(line_to(p.x, p.y))
            cur = p
        elif base == "V":
            y = sc.take_number()
            p = Point(cur.x, cur.y + y if rel else y)
            out.append(line_to(p.x, p.y))
            cur = p
        elif base == "C":
            origin = cur if rel else None
            c1 = _read_point(sc, origin)
            c2 = _read_point(sc, origin)
            end = _read_point(sc, origin)
            out.append(cubic_to(c1, c2, end))
            cur = end
        else:  # pragma: no cover - _SUPPORTED guards this
            raise UnsupportedCommand(letter, sc.pos)

    if not out:
        raise EmptyPath()
    return tuple(out)


def _read_point(sc: _Scanner, origin: Point | None) -> Point:
    x = sc.take_number()
    y = sc.take_number()
    if origin is not None:
        return Point(origin.x + x, origin.y + y)
    return Point(x, y)


def _points_close(a: Point, b: Point, tol: float) -> bool:
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol


def format_number(v: float, decimals: int) -> str:
    s = f"{v:.{decimals}f}"
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    if s in ("-0", ""):
        s = "0"
    return s


_LETTER = {
    CommandKind.MOVE_TO: "M",
    CommandKind.LINE_TO: "L",
    CommandKind.CUBIC_BEZIER: "C",
}


def serialize_path(commands: Iterable[Command], decimals: int = 6) -> str:
    """Serialize commands to path-data text.

    Numbers are printed with up to `decimals` decimal places (trailing zeros
    trimmed), so parse(serialize(g)) reproduces coordinates to within
    0.5 * 10**-decimals; pass decimals=9 when 1e-9 round-trips matter.
    Eos commands are dropped (they have no path-data equivalent).
    """
    parts: list[str] = []
    for cmd in commands:
        if cmd.kind == CommandKind.EOS:
            continue
        parts.append(_LETTER[cmd.kind])
        for p in cmd.points:
            parts.append(format_number(p.x, decimals))
            parts.append(format_number(p.y, decimals))
    return " ".join(parts)


def glyph_to_path(glyph: Glyph, decimals: int = 6) -> str:
    g = to_absolute(glyph) if glyph.coordinate_mode == CoordinateMode.RELATIVE else glyph
    return serialize_path(g.commands, decimals)


# ---------------------------------------------------------------------------
# coordinate modes

def _shift_command(cmd: Command, origin: Point, sign: int) -> Command:
    # all points of a command are offsets from the segment start, not chained
    if cmd.kind == CommandKind.EOS:
        return cmd
    moved = tuple(
        Point(p.x + sign * origin.x, p.y + sign * origin.y) for p in cmd.points
    )
    return Command(cmd.kind, moved)


def to_relative(glyph: Glyph) -> Glyph:
    """Rewrite an absolute glyph with per-command offsets from the pen position."""
    if glyph.coordinate_mode != CoordinateMode.ABSOLUTE:
        raise ValueError("to_relative expects an absolute-mode glyph")
    cur = Point(0.0, 0.0)
    out: list[Command] = []
    for cmd in glyph.commands:
        out.append(_shift_command(cmd, cur, -1))
        if cmd.kind != CommandKind.EOS:
            cur = cmd.endpoint
    return replace(glyph, commands=tuple(out), coordinate_mode=CoordinateMode.RELATIVE)


def to_absolute(glyph: Glyph) -> Glyph:
    if glyph.coordinate_mode != CoordinateMode.RELATIVE:
        raise ValueError("to_absolute expects a relative-mode glyph")
    cur = Point(0.0, 0.0)
    out: list[Command] = []
    for cmd in glyph.commands:
        shifted = _shift_command(cmd, cur, +1)
        out.append(shifted)
        if cmd.kind != CommandKind.EOS:
            cur = shifted.endpoint
    return replace(glyph, commands=tuple(out), coordinate_mode=CoordinateMode.ABSOLUTE)


# ---------------------------------------------------------------------------
# geometry

def signed_area(contour: Sequence[Point]) -> float:
    """Shoelace area of a closed polyline; positive means visually clockwise
    under the y-down convention.  Raises DegenerateContour for fewer than 3
    distinct vertices or a fully collinear vertex set."""
    pts = list(contour)
    if pts and _points_close(pts[0], pts[-1], 0.0):
        pts = pts[:-1]
    distinct: list[Point] = []
    for p in pts:
        if not any(_points_close(p, q, 0.0) for q in distinct):
            distinct.append(p)
    if len(distinct) < 3:
        raise DegenerateContour(f"only {len(distinct)} distinct vertices")
    if _all_collinear(distinct):
        raise DegenerateContour("all vertices collinear")
    acc = 0.0
    for i, p in enumerate(pts):
        q = pts[(i + 1) % len(pts)]
        acc += p.x * q.y - q.x * p.y
    return 0.5 * acc


def _all_collinear(pts: Sequence[Point]) -> bool:
    a, b = pts[0], pts[1]
    for c in pts[2:]:
        cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        if abs(cross) > 1e-12:
            return False
    return True


def _cubic_point(p0: Point, c1: Point, c2: Point, p1: Point, t: float) -> Point:
    u = 1.0 - t
    x = u**3 * p0.x + 3 * u**2 * t * c1.x + 3 * u * t**2 * c2.x + t**3 * p1.x
    y = u**3 * p0.y + 3 * u**2 * t * c1.y + 3 * u * t**2 * c2.y + t**3 * p1.y
    return Point(x, y)


def _contour_area(start: Point, segments: Sequence[Command]) -> float:
    # green's theorem over the exact outline; cubics via the closed form
    # A = integral (x dy - y dx) / 2 expanded in the Bernstein basis
    acc = 0.0
    cur = start
    for seg in segments:
        if seg.kind == CommandKind.LINE_TO:
            p = seg.endpoint
            acc += cur.x * p.y - p.x * cur.y
            cur = p
        else:
            p0, (c1, c2, p3) = cur, seg.points
            acc += (
                3.0 / 10.0 * (p0.x * c1.y - c1.x * p0.y)
                + 3.0 / 20.0 * (p0.x * c2.y - c2.x * p0.y)
                + 1.0 / 20.0 * (p0.x * p3.y - p3.x * p0.y)
                + 3.0 / 20.0 * (c1.x * c2.y - c2.x * c1.y)
                + 3.0 / 20.0 * (c1.x * p3.y - p3.x * c1.y)
                + 3.0 / 10.0 * (c2.x * p3.y - p3.x * c2.y)
            )
            cur = p3
    acc += cur.x * start.y - start.x * cur.y  # closing chord (zero when closed)
    return 0.5 * acc


@dataclass
class _Contour:
    start: Point
    segments: list[Command]  # LineTo / CubicBezier, absolute

    def vertices(self) -> list[Point]:
        out = [self.start]
        for seg in self.segments[:-1]:
            out.append(seg.endpoint)
        return out


def split_contours(commands: Sequence[Command]) -> list[_Contour]:
    contours: list[_Contour] = []
    cur: _Contour | None = None
    for cmd in commands:
        if cmd.kind == CommandKind.EOS:
            break
        if cmd.kind == CommandKind.MOVE_TO:
            cur = _Contour(cmd.endpoint, [])
            contours.append(cur)
        else:
            if cur is None:
                cur = _Contour(Point(0.0, 0.0), [])
                contours.append(cur)
            cur.segments.append(cmd)
    return [c for c in contours if c.segments]


def _reverse_contour(c: _Contour) -> _Contour:
    verts = c.vertices()  # v0 .. v_{n-1}; segment i runs v_i -> v_{i+1 mod n}
    segs: list[Command] = []
    n = len(c.segments)
    for i in range(n - 1, -1, -1):
        seg = c.segments[i]
        target = verts[i]
        if seg.kind == CommandKind.LINE_TO:
            segs.append(line_to(target.x, target.y))
        else:
            c1, c2, _ = seg.points
            segs.append(cubic_to(c2, c1, target))
    return _Contour(c.start, segs)


def _rotate_contour(c: _Contour, k: int) -> _Contour:
    verts = c.vertices()
    segs = list(c.segments[k:]) + list(c.segments[:k])
    return _Contour(verts[k], segs)


def _top_most_index(verts: Sequence[Point], tol: float = 1e-9) -> int:
    min_y = min(v.y for v in verts)
    cand = [i for i, v in enumerate(verts) if v.y <= min_y + tol]
    min_x = min(verts[i].x for i in cand)
    cand = [i for i in cand if verts[i].x <= min_x + tol]
    return cand[0]


def normalize(glyph: Glyph) -> Glyph:
    """Canonicalize a glyph: clockwise contours, top-most start vertex,
    relative coordinates, single trailing Eos.  Idempotent.

    Raises OpenContour if any contour does not return to its MoveTo point
    within 1e-6 and TooManyCommands past the 50-drawing-command budget.
    """
    g = to_absolute(glyph) if glyph.coordinate_mode == CoordinateMode.RELATIVE else glyph
    contours = split_contours(g.commands)
    if not contours:
        raise OpenContour("glyph has no drawable contour")

    out: list[Command] = []
    for c in contours:
        end = c.segments[-1].endpoint
        if not _points_close(end, c.start, CLOSE_TOL):
            raise OpenContour(
                f"contour starting at ({c.start.x}, {c.start.y}) ends at ({end.x}, {end.y})"
            )
        if _contour_area(c.start, c.segments) <= 0.0:
            c = _reverse_contour(c)
        k = _top_most_index(c.vertices())
        c = _rotate_contour(c, k)
        out.append(move_to(c.start.x, c.start.y))
        out.extend(c.segments)

    if len(out) > MAX_COMMANDS:
        raise TooManyCommands(f"{len(out)} drawing commands exceeds {MAX_COMMANDS}")
    out.append(EOS)
    normalized = Glyph(g.label, tuple(out), CoordinateMode.ABSOLUTE)
    return to_relative(normalized)


def reverse_contours(glyph: Glyph) -> Glyph:
    """Reverse the traversal direction of every contour (same geometry)."""
    g = to_absolute(glyph) if glyph.coordinate_mode == CoordinateMode.RELATIVE else glyph
    out: list[Command] = []
    for c in split_contours(g.commands):
        rc = _reverse_contour(c)
        out.append(move_to(rc.start.x, rc.start.y))
        out.extend(rc.segments)
    if g.commands and g.commands[-1].kind == CommandKind.EOS:
        out.append(EOS)
    result = Glyph(g.label, tuple(out), CoordinateMode.ABSOLUTE)
    if glyph.coordinate_mode == CoordinateMode.RELATIVE:
        return to_relative(result)
    return result


class NonPositiveScale(ValueError):
    pass


def rescale(glyph: Glyph, scale: float) -> Glyph:
    """Divide every coordinate by `scale` (mode-preserving)."""
    if not (scale > 0.0 and math.isfinite(scale)):
        raise NonPositiveScale(f"scale must be positive and finite, got {scale}")
    out = []
    for cmd in glyph.commands:
        if cmd.kind == CommandKind.EOS:
            out.append(cmd)
        else:
            out.append(
                Command(cmd.kind, tuple(Point(p.x / scale, p.y / scale) for p in cmd.points))
            )
    return replace(glyph, commands=tuple(out))


def glyphs_close(a: Glyph, b: Glyph, tol: float = 1e-9) -> bool:
    if a.label != b.label or a.coordinate_mode != b.coordinate_mode:
        return False
    if len(a.commands) != len(b.commands):
        return False
    for ca, cb in zip(a.commands, b.commands):
        if ca.kind != cb.kind:
            return False
        for pa, pb in zip(ca.points, cb.points):
            if abs(pa.x - pb.x) > tol or abs(pa.y - pb.y) > tol:
                return False
    return True
