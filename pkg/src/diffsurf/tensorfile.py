"""Minimal binary tensor container.

Layout (little-endian)::

    b"DSF1" | dtype u8 (1 = f32, 2 = f64) | ndim u8 | ndim x u32 dims | payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DSF1"
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    code = CODES.get(arr.dtype.newbyteorder("=")) if arr.dtype.kind == "f" else None
    if code is None:
        raise ValueError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    header = MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise ValueError("not a DSF1 tensor")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    off = 6 + 4 * ndim
    if len(buf) < off:
        raise ValueError("truncated header")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    dtype = DTYPES[code]
    expected = dtype.itemsize * int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != expected:
        raise ValueError(f"payload is {len(buf) - off} bytes, expected {expected}")
    return np.frombuffer(buf, dtype=dtype, offset=off).reshape(dims).copy()


def write_tensor(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
