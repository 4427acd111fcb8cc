"""Binary matrix file format.

Little-endian header followed by the row-major payload:

    magic   4 bytes  b"FTMM"
    version u16      format version (currently 1)
    dtype   u16      0 = FP32 (the only defined code)
    rows    u64
    cols    u64
    payload rows * cols * 4 bytes
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["MATRIX_FORMAT_VERSION", "MatrixFormatError", "write_matrix", "read_matrix"]

MAGIC = b"FTMM"
MATRIX_FORMAT_VERSION = 1
DTYPE_FP32 = 0

_HEADER = struct.Struct("<4sHHQQ")


class MatrixFormatError(ValueError):
    pass


def write_matrix(path: str, matrix: np.ndarray) -> None:
    if matrix.ndim != 2:
        raise MatrixFormatError("only 2-D matrices are supported")
    if matrix.dtype != np.float32:
        raise MatrixFormatError(f"dtype {matrix.dtype} unsupported; FP32 only")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, MATRIX_FORMAT_VERSION, DTYPE_FP32, rows, cols))
        fh.write(np.ascontiguousarray(matrix).astype("<f4", copy=False).tobytes())


def read_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise MatrixFormatError("truncated header")
        magic, version, dtype, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise MatrixFormatError(f"bad magic {magic!r}")
        if version != MATRIX_FORMAT_VERSION:
            raise MatrixFormatError(f"unsupported format version {version}")
        if dtype != DTYPE_FP32:
            raise MatrixFormatError(f"unsupported dtype code {dtype}")
        payload = fh.read(rows * cols * 4)
        if len(payload) != rows * cols * 4:
            raise MatrixFormatError("truncated payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(rows, cols)
