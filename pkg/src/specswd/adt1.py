"""ADT1 binary tensor files.

Layout: magic ``ADT1``, then little-endian uint32 ``version=1, C, W, H``, then
``C*W*H`` little-endian float32 values in channel-major row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError

MAGIC = b"ADT1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def encode(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise DimensionError(f"ADT1 stores rank-3 tensors, got shape {arr.shape}")
    c, w, h = arr.shape
    body = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, c, w, h) + body


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise DataError("truncated ADT1 header")
    magic, version, c, w, h = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"bad ADT1 magic {magic!r}")
    if version != VERSION:
        raise DataError(f"unsupported ADT1 version {version}")
    n = c * w * h
    if len(blob) != _HEADER.size + 4 * n:
        raise DataError(f"ADT1 payload size mismatch for shape {(c, w, h)}")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float32).reshape(c, w, h)


def write(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode(arr))


def read(path) -> np.ndarray:
    try:
        return decode(Path(path).read_bytes())
    except FileNotFoundError:
        raise DataError(f"no such tensor file: {path}") from None
