"""Binary embedding-matrix format.

Layout (little-endian): 8-byte magic ``CVEEMB01``, u32 vocab_size, u32
hidden_dim, u8 role code (0 = input_embedding, 1 = lm_head), then
vocab_size * hidden_dim float32 values row-major. A 2x3 matrix file is
8+4+4+1+24 = 41 bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix, ROLES
from .errors import FormatError

__all__ = ["MAGIC", "load_matrix", "save_matrix"]

MAGIC = b"CVEEMB01"
_HEAD = struct.Struct("<8sIIB")


def save_matrix(E: EmbeddingMatrix, path) -> None:
    role_code = ROLES.index(E.role)
    header = _HEAD.pack(MAGIC, E.n_rows, E.dim, role_code)
    payload = np.ascontiguousarray(E.rows, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_matrix(path) -> EmbeddingMatrix:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read matrix file {path}: {exc}") from exc
    if len(blob) < _HEAD.size:
        raise FormatError(f"matrix file {path} is truncated: {len(blob)} bytes, header needs {_HEAD.size}")
    magic, n_rows, dim, role_code = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} in {path}; expected {MAGIC!r}")
    if role_code >= len(ROLES):
        raise FormatError(f"unknown role code {role_code} in {path}")
    if n_rows < 1 or dim < 1:
        raise FormatError(f"matrix file {path} declares empty shape {n_rows}x{dim}")
    expected = _HEAD.size + n_rows * dim * 4
    if len(blob) != expected:
        raise FormatError(
            f"matrix file {path} has {len(blob)} bytes; shape {n_rows}x{dim} needs exactly {expected}"
        )
    rows = np.frombuffer(blob, dtype="<f4", offset=_HEAD.size).reshape(n_rows, dim).copy()
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"matrix file {path} contains non-finite values")
    return EmbeddingMatrix(rows, role=ROLES[role_code])
