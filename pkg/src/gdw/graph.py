"""
Graph storage, normalized operators and the sparse kernels.

A :class:`Graph` keeps an unweighted topology in CSR form together with its
transpose index. Every diffusion matrix used elsewhere in the package is a
:class:`SparseOperator` produced by :func:`build_normalized` or by products
of such operators (:func:`spspmm`). Dense features are plain ``float64``
numpy arrays of shape ``(n, d)``.

Zero degrees follow the convention ``d**-0.5 = 0`` and ``1/d = 0``, so
isolated nodes yield all-zero rows and columns instead of NaNs.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import DataError, NumericalError, ShapeError

PRUNE_EPS = 1e-15

_NUM_THREADS = os.cpu_count() or 1


def set_num_threads(k: int) -> None:
    """Set the worker count used by :func:`spmm` (1 = reference path)."""
    global _NUM_THREADS
    if k < 1:
        raise DataError(f"thread count must be >= 1, got {k}")
    _NUM_THREADS = int(k)


def get_num_threads() -> int:
    return _NUM_THREADS


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


def _csr_from_pairs(n, src, dst):
    """Deduplicated binary CSR arrays with sorted column indices."""
    if len(src) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    key = np.unique(src.astype(np.int64) * n + dst.astype(np.int64))
    rows = key // n
    cols = key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable unweighted graph.

    Attributes
    ----------
    n : int
        Number of nodes.
    directed : bool
        Whether edge direction is meaningful. Undirected graphs store every
        edge in both directions, so ``out_*`` is symmetric.
    out_indptr, out_indices : ndarray
        CSR index of edges ``i -> j``; columns strictly increasing per row.
    in_indptr, in_indices : ndarray
        CSR index of the transpose (edges ``j -> i`` grouped by ``i``).
    self_loop_count : int
        Number of distinct ``i -> i`` edges seen on input. They are not
        stored; normalizations that need self-loops add them.
    """

    n: int
    directed: bool
    out_indptr: np.ndarray
    out_indices: np.ndarray
    in_indptr: np.ndarray
    in_indices: np.ndarray
    self_loop_count: int = 0

    def __post_init__(self):
        for arr in (self.out_indptr, self.out_indices, self.in_indptr, self.in_indices):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, src, dst, directed: bool = True) -> "Graph":
        """Build a graph from edge endpoint arrays.

        Duplicate edges are collapsed and self-loops are counted, then
        dropped. For ``directed=False`` each edge is stored both ways.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ShapeError(f"src has {src.size} entries but dst has {dst.size}")
        if n < 0:
            raise DataError(f"node count must be non-negative, got {n}")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise DataError(f"edge endpoint outside [0, {n})")
        loops = src == dst
        self_loops = int(np.unique(src[loops]).size)
        src, dst = src[~loops], dst[~loops]
        if not directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        out_ptr, out_idx = _csr_from_pairs(n, src, dst)
        in_ptr, in_idx = _csr_from_pairs(n, dst, src)
        return cls(n, bool(directed), out_ptr, out_idx, in_ptr, in_idx, self_loops)

    @property
    def num_edges(self) -> int:
        """Stored directed edges; an undirected edge counts once."""
        m = int(self.out_indices.size)
        return m if self.directed else m // 2

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_indptr)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_indptr)

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.out_indices[self.out_indptr[i]:self.out_indptr[i + 1]]

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.in_indices[self.in_indptr[i]:self.in_indptr[i + 1]]

    def edges(self):
        """Return ``(src, dst)`` arrays of all stored edges."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree)
        return src, self.out_indices.copy()

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Binary adjacency ``A`` with ``a_ij = 1`` iff ``i -> j``."""
        data = np.ones(self.out_indices.size)
        A = sp.csr_matrix((data, self.out_indices, self.out_indptr), shape=(self.n, self.n))
        A.has_sorted_indices = True
        return A

    def symmetrized(self) -> "Graph":
        """Undirected version with ``a_ij = 1`` iff ``i -> j`` or ``j -> i``."""
        if not self.directed:
            return self
        src, dst = self.edges()
        g = Graph.from_edges(self.n, src, dst, directed=False)
        return Graph(g.n, False, g.out_indptr, g.out_indices, g.in_indptr,
                     g.in_indices, self.self_loop_count)

    def connected_components(self) -> np.ndarray:
        """Weakly connected component id per node (ids in first-seen order)."""
        _, labels = csgraph.connected_components(self.adjacency, directed=True,
                                                 connection="weak")
        # relabel so component ids follow the smallest node index
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        remap = np.empty_like(order)
        remap[order] = np.arange(order.size)
        return remap[labels]

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, m={self.num_edges}, {kind})"


def load_edge_list(path: Union[str, Path], directed: bool = True,
                   nodes: Optional[int] = None) -> Graph:
    """Read a ``src<TAB>dst`` edge list with 0-based ids.

    Lines starting with ``#`` and blank lines are skipped. ``n`` is
    ``1 + max id`` unless ``nodes`` fixes it explicitly.
    """
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'src<TAB>dst', got {s!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
            if a < 0 or b < 0:
                raise DataError(f"{path}:{lineno}: negative node id in {s!r}")
            if nodes is not None and max(a, b) >= nodes:
                raise DataError(f"{path}:{lineno}: node id {max(a, b)} >= --nodes {nodes}")
            src.append(a)
            dst.append(b)
    if nodes is None:
        if not src:
            raise DataError(f"{path}: no edges and no explicit node count")
        nodes = 1 + max(max(src), max(dst))
    return Graph.from_edges(nodes, np.array(src, dtype=np.int64),
                            np.array(dst, dtype=np.int64), directed=directed)


def save_edge_list(g: Graph, path: Union[str, Path]) -> None:
    src, dst = g.edges()
    if not g.directed:
        keep = src < dst
        src, dst = src[keep], dst[keep]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} directed={int(g.directed)}\n")
        for a, b in zip(src.tolist(), dst.tolist()):
            fh.write(f"{a}\t{b}\n")


# ---------------------------------------------------------------------------
# Sparse operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Real sparse matrix in canonical CSR form plus the recipe that built it.

    The matrix is canonicalized on construction: duplicates summed, indices
    sorted, entries with magnitude below ``PRUNE_EPS`` removed. Non-finite
    values are rejected.
    """

    matrix: sp.csr_matrix
    provenance: str = ""

    def __post_init__(self):
        M = sp.csr_matrix(self.matrix, dtype=np.float64, copy=True)
        M.sum_duplicates()
        M.sort_indices()
        if not np.all(np.isfinite(M.data)):
            raise NumericalError(f"non-finite entries in operator {self.provenance!r}")
        small = np.abs(M.data) < PRUNE_EPS
        if small.any():
            M.data[small] = 0.0
            M.eliminate_zeros()
        for arr in (M.data, M.indices, M.indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def T(self) -> "SparseOperator":
        return transpose(self)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def __repr__(self):
        return f"SparseOperator({self.rows}x{self.cols}, nnz={self.nnz}, {self.provenance!r})"


class Norm(str, enum.Enum):
    """Normalization recipes for :func:`build_normalized`."""

    SYM_SELFLOOP = "sym_selfloop"  # D^-1/2 (A+I) D^-1/2, degrees of A+I
    SYM = "sym"                    # D^-1/2 A D^-1/2
    ROW = "row"                    # D^-1 A
    DIR_FWD = "dir_fwd"            # D_out^-1/2 A D_in^-1/2
    DIR_BWD = "dir_bwd"            # transpose of DIR_FWD
    ROW_FWD = "row_fwd"            # D_out^-1 A
    ROW_BWD = "row_bwd"            # D_in^-1 A^T


def _inv(d, power):
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = d[pos] ** (-power)
    return out


def _scaled(A: sp.csr_matrix, left, right) -> sp.csr_matrix:
    """``diag(left) @ A @ diag(right)`` computed entrywise on the CSR payload."""
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    data = A.data * left[rows] * right[A.indices]
    return sp.csr_matrix((data, A.indices.copy(), A.indptr.copy()), shape=A.shape)


def build_normalized(g: Graph, scheme: Union[Norm, str]) -> SparseOperator:
    """Normalized adjacency of ``g`` under ``scheme``.

    ``SYM_SELFLOOP``, ``SYM`` and ``ROW`` act on the symmetrized adjacency
    when ``g`` is directed. ``DIR_*`` schemes require a directed graph.
    """
    scheme = Norm(scheme)
    if g.n == 0:
        raise DataError("cannot normalize an empty graph")
    if scheme in (Norm.DIR_FWD, Norm.DIR_BWD) and not g.directed:
        raise DataError(f"{scheme.value} requires a directed graph")

    if scheme in (Norm.SYM_SELFLOOP, Norm.SYM, Norm.ROW):
        A = g.symmetrized().adjacency
        if scheme is Norm.SYM_SELFLOOP:
            A = (A + sp.identity(g.n, format="csr")).tocsr()
            A.sort_indices()
        d = np.diff(A.indptr).astype(np.float64)
        if scheme is Norm.ROW:
            M = _scaled(A, _inv(d, 1.0), np.ones(g.n))
        else:
            s = _inv(d, 0.5)
            M = _scaled(A, s, s)
    elif scheme is Norm.DIR_FWD:
        M = _scaled(g.adjacency, _inv(g.out_degree, 0.5), _inv(g.in_degree, 0.5))
    elif scheme is Norm.DIR_BWD:
        fwd = build_normalized(g, Norm.DIR_FWD)
        return SparseOperator(fwd.matrix.T.tocsr(), Norm.DIR_BWD.value)
    elif scheme is Norm.ROW_FWD:
        M = _scaled(g.adjacency, _inv(g.out_degree, 1.0), np.ones(g.n))
    else:  # ROW_BWD
        At = g.adjacency.T.tocsr()
        M = _scaled(At, _inv(g.in_degree, 1.0), np.ones(g.n))
    return SparseOperator(M, scheme.value)


def normalized_laplacian(g: Graph, with_self_loops: bool = False) -> SparseOperator:
    """``I - Ã`` with ``Ã`` the SYM_SELFLOOP (or SYM) normalized adjacency."""
    scheme = Norm.SYM_SELFLOOP if with_self_loops else Norm.SYM
    if g.n == 0:
        raise DataError("cannot build the Laplacian of an empty graph")
    A = build_normalized(g, scheme).matrix
    L = sp.identity(g.n, format="csr") - A
    return SparseOperator(L, f"laplacian[{scheme.value}]")


def operator_from_dense(M, provenance: str = "dense") -> SparseOperator:
    return SparseOperator(sp.csr_matrix(np.asarray(M, dtype=np.float64)), provenance)


def identity(n: int) -> SparseOperator:
    return SparseOperator(sp.identity(n, format="csr"), "identity")


def transpose(S: SparseOperator) -> SparseOperator:
    return SparseOperator(S.matrix.T.tocsr(), f"({S.provenance})^T")


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _row_chunks(indptr, parts):
    """Split rows into ``parts`` contiguous ranges of roughly equal nnz."""
    nnz = indptr[-1]
    cuts = np.searchsorted(indptr, np.linspace(0, nnz, parts + 1)[1:-1])
    bounds = np.unique(np.concatenate([[0], cuts, [len(indptr) - 1]]))
    return list(zip(bounds[:-1], bounds[1:]))


def spmm(S: SparseOperator, X, threads: Optional[int] = None) -> np.ndarray:
    """Sparse-dense product ``S @ X``.

    Each output row accumulates its nonzeros in column order, so the result
    does not depend on the number of worker threads.
    """
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if X.ndim != 2 or S.cols != X.shape[0]:
        raise ShapeError(f"operator is {S.rows}x{S.cols} but features are {X.shape}")
    threads = get_num_threads() if threads is None else threads
    M = S.matrix
    if threads <= 1 or M.nnz < 100_000:
        Y = np.asarray(M @ X)
    else:
        Y = np.empty((S.rows, X.shape[1]))

        def work(bounds):
            a, b = bounds
            Y[a:b] = M[a:b] @ X

        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, _row_chunks(M.indptr, threads)))
    return Y[:, 0] if squeeze else Y


def spspmm(S1: SparseOperator, S2: SparseOperator) -> SparseOperator:
    """Sparse-sparse product; entries below ``PRUNE_EPS`` are pruned."""
    if S1.cols != S2.rows:
        raise ShapeError(f"cannot multiply {S1.rows}x{S1.cols} by {S2.rows}x{S2.cols}")
    return SparseOperator((S1.matrix @ S2.matrix).tocsr(),
                          f"{S1.provenance}*{S2.provenance}")
