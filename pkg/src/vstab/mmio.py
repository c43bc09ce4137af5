"""Matrix Market input/output for dense operators and vectors.

Parsing is delegated to :mod:`scipy.io`; this module adds the header
checks and the conversion to a dense complex array.
"""
from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .errors import MatrixMarketError

_FIELDS = ("real", "complex", "integer")


def _check_header(text_head: str, path):
    first = text_head.splitlines()[0] if text_head else ""
    tokens = first.lower().split()
    if len(tokens) < 5 or tokens[0] != "%%matrixmarket" or tokens[1] != "matrix":
        raise MatrixMarketError(f"{path}: missing '%%MatrixMarket matrix' header")
    fmt, field, symmetry = tokens[2], tokens[3], tokens[4]
    if fmt not in ("array", "coordinate"):
        raise MatrixMarketError(f"{path}: unsupported format {fmt!r}")
    if field not in _FIELDS:
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    return fmt, field, symmetry


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_matrix(path) -> np.ndarray:
    """Read a Matrix Market file into a dense complex128 array.

    Raises
    ------
    MatrixMarketError
        On a missing file, bad header, malformed body or non-finite entry.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MatrixMarketError(f"{path}: {exc.strerror or exc}") from exc
    try:
        head = raw[:512].decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover - decode with replace cannot fail
        raise MatrixMarketError(str(exc)) from exc
    _check_header(head, path)
    try:
        data = scipy.io.mmread(io.BytesIO(raw))
    except Exception as exc:  # scipy raises ValueError, IndexError, ... on bad bodies
        raise MatrixMarketError(f"{path}: cannot parse body ({exc})") from exc
    if scipy.sparse.issparse(data):
        data = data.toarray()
    A = np.asarray(data, dtype=np.complex128)
    if A.ndim != 2:
        raise MatrixMarketError(f"{path}: expected a 2-d matrix")
    if not np.all(np.isfinite(A)):
        raise MatrixMarketError(f"{path}: non-finite entries")
    return A


def read_square(path) -> np.ndarray:
    A = read_matrix(path)
    if A.shape[0] != A.shape[1]:
        raise MatrixMarketError(f"{path}: matrix is {A.shape[0]}x{A.shape[1]}, not square")
    return A


def read_vector(path) -> np.ndarray:
    """Read an n x 1 (or 1 x n) Matrix Market array as a flat vector."""
    A = read_matrix(path)
    if 1 not in A.shape:
        raise MatrixMarketError(f"{path}: expected a vector, got shape {A.shape}")
    return A.reshape(-1)


def write_matrix(path, A, comment: str = "") -> None:
    """Write a dense matrix in array format; complex field only when needed."""
    A = np.atleast_2d(np.asarray(A))
    field = "complex" if np.iscomplexobj(A) and np.any(A.imag != 0) else "real"
    if field == "real":
        A = np.real(A)
    # a file handle keeps scipy from appending ".mtx" to the name
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, A, comment=comment, field=field, precision=17)
