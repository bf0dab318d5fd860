"""Binary tensor container used by the command-line tools.

Layout (little-endian)::

    b"OGMI"  u8 version  u8 dtype  u32 c  u32 h  u32 w  payload

dtype 0 stores fixed-point codes sign-extended into int16 containers, dtype 1
stores float64 samples. The payload is channel-major, row-major.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"OGMI"
VERSION = 1
DTYPE_FIXED = 0
DTYPE_REAL = 1
_HEADER = struct.Struct("<4sBB3I")
_PAYLOAD = {DTYPE_FIXED: np.dtype("<i2"), DTYPE_REAL: np.dtype("<f8")}


def encode(data: np.ndarray, dtype: int, word_bits: int = 12) -> bytes:
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValueError(f"tensor must be 3-D (c, h, w), got shape {data.shape}")
    if dtype == DTYPE_FIXED:
        lo, hi = -(1 << (word_bits - 1)), (1 << (word_bits - 1)) - 1
        if data.size and (data.min() < lo or data.max() > hi):
            raise ValueError(f"fixed-point codes exceed {word_bits} bits")
    elif dtype != DTYPE_REAL:
        raise ValueError(f"unknown dtype code {dtype}")
    header = _HEADER.pack(MAGIC, VERSION, dtype, *data.shape)
    return header + data.astype(_PAYLOAD[dtype]).tobytes()


def decode(buf: bytes, word_bits: int = 12):
    """Return ``(dtype_code, array)``; fixed codes come back as int64."""
    if len(buf) < _HEADER.size:
        raise ValueError("tensor file truncated: header incomplete")
    magic, version, dtype, c, h, w = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"unsupported tensor file version {version}")
    if dtype not in _PAYLOAD:
        raise ValueError(f"unknown dtype code {dtype}")
    payload = buf[_HEADER.size:]
    want = c * h * w * _PAYLOAD[dtype].itemsize
    if len(payload) != want:
        raise ValueError(f"payload is {len(payload)} bytes, dims {c}x{h}x{w} need {want}")
    arr = np.frombuffer(payload, dtype=_PAYLOAD[dtype]).reshape(c, h, w)
    if dtype == DTYPE_FIXED:
        arr = arr.astype(np.int64)
        lo, hi = -(1 << (word_bits - 1)), (1 << (word_bits - 1)) - 1
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(f"fixed-point codes exceed {word_bits} bits")
    else:
        arr = arr.astype(np.float64)
    return dtype, arr


def write_tensor(path, data: np.ndarray, dtype: int, word_bits: int = 12):
    with open(path, "wb") as fh:
        fh.write(encode(data, dtype, word_bits))


def read_tensor(path, word_bits: int = 12):
    with open(path, "rb") as fh:
        return decode(fh.read(), word_bits)
