"""TLAT lattice files.

Layout (little-endian): magic ``b"TLAT"``, then five u32 fields ``version, T, U, K, dtype``
(dtype 1 = float64), then T·(U+1)·K float64 values in [t][u][k] row-major order.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from hatkit.core.errors import StorageError

MAGIC = b"TLAT"
VERSION = 1
DTYPE_FLOAT64 = 1
_HEADER = struct.Struct("<4s5I")


def write_lattice(path: Union[str, Path], logits: np.ndarray) -> None:
    data = np.ascontiguousarray(logits, dtype="<f8")
    if data.ndim != 3:
        raise StorageError(f"lattice must be rank 3, got shape {data.shape}")
    T, U1, K = data.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, T, U1 - 1, K, DTYPE_FLOAT64))
        f.write(data.tobytes())


def read_lattice(path: Union[str, Path]) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise StorageError(f"{path}: truncated lattice header")
    magic, version, T, U, K, dtype = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StorageError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise StorageError(f"{path}: unsupported lattice version {version}")
    if dtype != DTYPE_FLOAT64:
        raise StorageError(f"{path}: unsupported dtype code {dtype}")
    expected = T * (U + 1) * K * 8
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise StorageError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f8").reshape(T, U + 1, K).astype(np.float64)
