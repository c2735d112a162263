"""MTX1: a minimal binary container for one dense real matrix.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic  b"MTX1"
    4       1     version (1)
    5       1     dtype   (1 = float32, 2 = float64)
    6       4     rows    u32
    10      4     cols    u32
    14      ...   payload, row-major, rows * cols * itemsize bytes
"""

import struct
from pathlib import Path

import numpy as np

from repmult.errors import BadMagicError, FormatError, PayloadLengthError, ShapeError, UnsupportedDtypeError

MAGIC = b"MTX1"
VERSION = 1
HEADER = struct.Struct("<4sBBII")
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODES = {"f4": 1, "float32": 1, "f8": 2, "float64": 2}


def encode_matrix(m, dtype="f8"):
    a = np.asarray(m)
    if a.ndim != 2:
        raise ShapeError(f"MTX1 stores 2-D matrices, got shape {a.shape}")
    try:
        code = CODES[dtype]
    except KeyError:
        raise UnsupportedDtypeError(f"unsupported dtype {dtype!r}") from None
    payload = np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()
    return HEADER.pack(MAGIC, VERSION, code, a.shape[0], a.shape[1]) + payload


def decode_matrix(raw, source="<bytes>"):
    if len(raw) < HEADER.size:
        raise PayloadLengthError(f"{source}: length mismatch, header needs {HEADER.size} bytes, got {len(raw)}")
    magic, version, code, rows, cols = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if code not in DTYPES:
        raise UnsupportedDtypeError(f"{source}: unsupported dtype code {code}")
    dt = DTYPES[code]
    expected = rows * cols * dt.itemsize
    payload = raw[HEADER.size:]
    if len(payload) != expected:
        raise PayloadLengthError(f"{source}: length mismatch, expected {expected} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=dt).reshape(rows, cols).astype(np.float64)


def write_matrix(m, path, dtype="f8"):
    path = Path(path)
    data = encode_matrix(m, dtype)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write MTX1 file {path}: {exc}") from exc


def read_matrix(path):
    """Read an MTX1 file; float32 payloads are widened to float64."""
    path = Path(path)
    return decode_matrix(path.read_bytes(), str(path))
