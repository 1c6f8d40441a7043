"""Named-tensor checkpoint archive and plain-text config files.

Archive layout (all integers little-endian):

    magic   4 bytes  b"GGCK"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor:
      name_len u32, name utf-8
      dtype    u8   0 = float32, 1 = float64
      ndim     u8
      dims     ndim x u32
      data     raw little-endian values, C order

Config files are one `key = <json value>` line per field.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from typing import Any

import numpy as np

MAGIC = b"GGCK"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class BadArchive(ValueError):
    pass


def save_tensors(path: str, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise BadArchive(f"{name}: unsupported dtype {arr.dtype}")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise BadArchive(f"bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise BadArchive(f"unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            code, ndim = struct.unpack_from("<BB", blob, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            dtype = _CODE_DTYPES[code]
            nbytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
            arr = np.frombuffer(blob, dtype=dtype, count=max(int(np.prod(shape)), 1), offset=pos)
            pos += nbytes
            out[name] = arr.reshape(shape).copy()
    except (struct.error, KeyError, ValueError) as e:
        raise BadArchive(f"truncated or corrupt archive: {e}") from e
    if pos != len(blob):
        raise BadArchive(f"{len(blob) - pos} trailing bytes")
    return out


def _tuplify(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tuplify(v) for v in value)
    return value


def save_config(path: str, config: Any) -> None:
    """Write a dataclass as `key = <json>` lines."""
    with open(path, "w") as f:
        for field in dataclasses.fields(config):
            value = getattr(config, field.name)
            if isinstance(value, tuple):
                value = list(value)
            f.write(f"{field.name} = {json.dumps(value)}\n")


def load_config(path: str, cls):
    kwargs = {}
    field_types = {f.name: f for f in dataclasses.fields(cls)}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in field_types:
                raise KeyError(f"unknown config key {key!r} for {cls.__name__}")
            value = json.loads(raw.strip())
            if isinstance(value, list):
                value = _tuplify(value)
            kwargs[key] = value
    return cls(**kwargs)
