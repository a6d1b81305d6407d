"""
File formats: GDM1 dense matrices, CSV matrices, label and mask files.

GDM1 layout: the 4 magic bytes ``b"GDM1"``, little-endian ``u64`` rows and
``u64`` cols, then ``rows * cols`` little-endian ``float64`` values in
row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DataError
from .labels import UNKNOWN, LabelVector

PathLike = Union[str, Path]

GDM_MAGIC = b"GDM1"
_HEADER = struct.Struct("<4sQQ")


def write_gdm(path: PathLike, X) -> None:
    X = np.ascontiguousarray(np.asarray(X, dtype="<f8"))
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError(f"GDM1 stores 2-D matrices, got shape {X.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GDM_MAGIC, X.shape[0], X.shape[1]))
        fh.write(X.tobytes(order="C"))


def read_gdm(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataError(f"{path}: truncated GDM1 header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != GDM_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {GDM_MAGIC!r}")
        payload = fh.read()
    if len(payload) != rows * cols * 8:
        raise DataError(f"{path}: expected {rows * cols * 8} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def read_dense_csv(path: PathLike) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return X


def write_dense_csv(path: PathLike, X) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    np.savetxt(path, X, delimiter=",", fmt="%.17g")


def read_matrix(path: PathLike) -> np.ndarray:
    """Read a dense matrix, choosing the format by extension (``.csv`` or GDM1)."""
    if str(path).lower().endswith(".csv"):
        return read_dense_csv(path)
    return read_gdm(path)


def write_matrix(path: PathLike, X) -> None:
    if str(path).lower().endswith(".csv"):
        write_dense_csv(path, X)
    else:
        write_gdm(path, X)


def read_labels(path: PathLike, n: Optional[int] = None,
                num_classes: Optional[int] = None) -> LabelVector:
    """Read ``node_id,label_id`` lines; nodes not listed are UNKNOWN.

    A label of ``-1`` (or an empty field) also marks the node as unknown.
    """
    ids, labs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = [p.strip() for p in s.split(",")]
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'node_id,label_id', got {s!r}")
            try:
                i = int(parts[0])
                c = int(parts[1]) if parts[1] else UNKNOWN
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {s!r}") from None
            if i < 0 or c < UNKNOWN:
                raise DataError(f"{path}:{lineno}: negative id in {s!r}")
            ids.append(i)
            labs.append(c)
    if n is None:
        n = 1 + max(ids) if ids else 0
    elif ids and max(ids) >= n:
        raise DataError(f"{path}: node id {max(ids)} >= node count {n}")
    y = np.full(n, UNKNOWN, dtype=np.int64)
    y[np.array(ids, dtype=np.int64)] = np.array(labs, dtype=np.int64)
    return LabelVector.from_array(y, num_classes)


def write_labels(path: PathLike, y: LabelVector) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(y.values.tolist()):
            fh.write(f"{i},{c}\n")


def read_mask_csv(path: PathLike) -> np.ndarray:
    """Read an ``n x d`` 0/1 CSV; 1 marks an observed entry."""
    M = read_dense_csv(path)
    if not np.all((M == 0) | (M == 1)):
        raise DataError(f"{path}: mask entries must be 0 or 1")
    return M.astype(bool)


def write_mask_csv(path: PathLike, mask) -> None:
    mask = np.asarray(mask, dtype=bool)
    np.savetxt(path, mask.astype(np.int8), delimiter=",", fmt="%d")
