"""Fixed-width numeric encoding of glyph command sequences.

Each command becomes a 10-wide row: a 4-way one-hot over (MoveTo, LineTo,
CubicBezier, Eos) followed by 6 argument slots laid out as
[c1.x, c1.y, c2.x, c2.y, end.x, end.y].  MoveTo/LineTo use only the endpoint
slots 4..5 so the endpoint means the same thing for every drawing command.
Sequences are padded to a fixed length with an explicit boolean mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .svgpath import EOS, Command, CommandKind, CoordinateMode, Glyph, Point, cubic_to

ONEHOT_WIDTH = 4
ARG_WIDTH = 6
TUPLE_WIDTH = ONEHOT_WIDTH + ARG_WIDTH
# 50 drawing commands plus the Eos row
MAX_LEN = 51

# argument slots active per command kind, used by the MDN loss mask
ACTIVE_ARG_SLOTS: dict[CommandKind, tuple[int, ...]] = {
    CommandKind.MOVE_TO: (4, 5),
    CommandKind.LINE_TO: (4, 5),
    CommandKind.CUBIC_BEZIER: (0, 1, 2, 3, 4, 5),
    CommandKind.EOS: (),
}


class SequenceTooLong(ValueError):
    pass


class NoEos(ValueError):
    pass


class InvalidOneHot(ValueError):
    pass


@dataclass(frozen=True)
class SequenceTensor:
    """Padded command-tuple matrix with its true length and step mask."""

    data: np.ndarray  # (T, 10) float32
    length: int
    mask: np.ndarray  # (T,) bool

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[1] != TUPLE_WIDTH:
            raise ValueError(f"data must be (T, {TUPLE_WIDTH}), got {self.data.shape}")
        if not 0 < self.length <= self.data.shape[0]:
            raise ValueError(f"length {self.length} outside 1..{self.data.shape[0]}")

    @property
    def max_len(self) -> int:
        return self.data.shape[0]


def encode_command(cmd: Command) -> np.ndarray:
    row = np.zeros(TUPLE_WIDTH, dtype=np.float32)
    row[int(cmd.kind)] = 1.0
    if cmd.kind == CommandKind.CUBIC_BEZIER:
        c1, c2, end = cmd.points
        row[4:10] = [c1.x, c1.y, c2.x, c2.y, end.x, end.y]
    elif cmd.kind != CommandKind.EOS:
        end = cmd.points[0]
        row[8:10] = [end.x, end.y]
    return row


def decode_command(row: np.ndarray) -> Command:
    onehot = np.asarray(row[:ONEHOT_WIDTH], dtype=np.float64)
    if not np.any(onehot != 0.0):
        raise InvalidOneHot("all-zero one-hot row")
    kind = CommandKind(int(np.argmax(onehot)))
    args = [float(v) for v in row[ONEHOT_WIDTH:TUPLE_WIDTH]]
    if kind == CommandKind.EOS:
        return EOS
    if kind == CommandKind.CUBIC_BEZIER:
        return cubic_to(Point(args[0], args[1]), Point(args[2], args[3]), Point(args[4], args[5]))
    return Command(kind, (Point(args[4], args[5]),))


def encode_glyph(glyph: Glyph, max_len: int = MAX_LEN) -> SequenceTensor:
    """Encode a normalized relative glyph; appends the Eos row if absent."""
    if glyph.coordinate_mode != CoordinateMode.RELATIVE:
        raise ValueError("encode_glyph expects a relative-mode glyph")
    cmds = list(glyph.drawing_commands()) + [EOS]
    if len(cmds) > max_len:
        raise SequenceTooLong(f"{len(cmds)} rows exceed max_len {max_len}")
    data = np.zeros((max_len, TUPLE_WIDTH), dtype=np.float32)
    for i, cmd in enumerate(cmds):
        data[i] = encode_command(cmd)
    mask = np.zeros(max_len, dtype=bool)
    mask[: len(cmds)] = True
    return SequenceTensor(data, len(cmds), mask)


def decode_glyph(seq: SequenceTensor, label: int) -> Glyph:
    """Decode rows up to the first Eos (argmax over soft one-hots)."""
    cmds: list[Command] = []
    for i in range(seq.length):
        cmd = decode_command(seq.data[i])
        cmds.append(cmd)
        if cmd.kind == CommandKind.EOS:
            return Glyph(label, tuple(cmds), CoordinateMode.RELATIVE)
    raise NoEos(f"no Eos row within length {seq.length}")


def stack_sequences(seqs: list[SequenceTensor]) -> tuple[np.ndarray, np.ndarray]:
    """Stack equal-max_len sequences into (B, T, 10) data and (B, T) mask."""
    if not seqs:
        raise ValueError("empty batch")
    widths = {s.max_len for s in seqs}
    if len(widths) != 1:
        raise ValueError(f"mixed max_len in batch: {sorted(widths)}")
    data = np.stack([s.data for s in seqs]).astype(np.float32)
    mask = np.stack([s.mask for s in seqs])
    return data, mask
