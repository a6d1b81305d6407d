"""
Homophily analytics for (directed) graphs and weighted diffusion matrices.

Weighted node homophily of a nonnegative matrix ``S`` averages, over rows
with positive mass, the share of row mass that lands on same-label
columns. Effective homophily is the maximum of that quantity over a family
of 1- and 2-hop matrices built from the binary adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from .errors import DataError, ShapeError
from .graph import Graph, SparseOperator
from .labels import LabelVector

DIRECTED_SET = ("A", "A^T", "A^2", "(A^T)^2", "A^T A", "A A^T")
UNDIRECTED_SET = ("A_u", "A_u^2")


def _as_csr(S) -> sp.csr_matrix:
    M = S.matrix if isinstance(S, SparseOperator) else S
    return sp.csr_matrix(M, dtype=np.float64)


def _prepared(S, y: LabelVector, zero_diag: bool):
    M = _as_csr(S)
    if M.shape[0] != M.shape[1] or M.shape[0] != len(y):
        raise ShapeError(f"matrix is {M.shape} but there are {len(y)} labels")
    if M.nnz and M.data.min() < 0:
        raise DataError("homophily needs a nonnegative message-passing matrix")
    M.sum_duplicates()
    M = M.tocoo()
    if zero_diag:
        keep = M.row != M.col
        M = sp.coo_matrix((M.data[keep], (M.row[keep], M.col[keep])), shape=M.shape)
    return M, y.require_known()


def node_homophily(g: Graph, y: LabelVector) -> float:
    """Average fraction of (out-)neighbours sharing the node's label.

    Nodes without neighbours are skipped.
    """
    labels = y.require_known()
    if len(y) != g.n:
        raise ShapeError(f"graph has {g.n} nodes but there are {len(y)} labels")
    src, dst = g.edges()
    same = np.bincount(src, weights=(labels[src] == labels[dst]).astype(float),
                       minlength=g.n)
    deg = g.out_degree
    keep = deg > 0
    if not keep.any():
        return 0.0
    return float(np.mean(same[keep] / deg[keep]))


def compatibility_matrix(g: Graph, y: LabelVector) -> np.ndarray:
    """``H[k, l]``: share of edges leaving class ``k`` that enter class ``l``."""
    labels = y.require_known()
    src, dst = g.edges()
    C = y.num_classes
    counts = np.zeros((C, C))
    np.add.at(counts, (labels[src], labels[dst]), 1.0)
    return _row_normalize(counts)


def _row_normalize(M):
    s = M.sum(axis=1, keepdims=True)
    out = np.zeros_like(M)
    np.divide(M, s, out=out, where=s > 0)
    return out


def weighted_node_homophily(S, y: LabelVector, zero_diag: bool = True) -> float:
    """Weighted node homophily of ``S``; rows with zero mass are skipped."""
    M, labels = _prepared(S, y, zero_diag)
    n = M.shape[0]
    mass = np.bincount(M.row, weights=M.data, minlength=n)
    same = np.bincount(M.row, weights=M.data * (labels[M.row] == labels[M.col]),
                       minlength=n)
    keep = mass > 0
    if not keep.any():
        return 0.0
    return float(np.mean(same[keep] / mass[keep]))


def weighted_compatibility(S, y: LabelVector, zero_diag: bool = True) -> np.ndarray:
    """``C x C`` matrix of ``S``-mass from class ``k`` to class ``l``, row-normalized."""
    M, labels = _prepared(S, y, zero_diag)
    C = y.num_classes
    counts = np.zeros((C, C))
    np.add.at(counts, (labels[M.row], labels[M.col]), M.data)
    return _row_normalize(counts)


def two_hop_matrices(g: Graph) -> Dict[str, sp.csr_matrix]:
    """Raw (binary-product) 1- and 2-hop matrices of ``g`` and its symmetrization."""
    A = g.adjacency
    At = A.T.tocsr()
    Au = g.symmetrized().adjacency
    return {
        "A": A,
        "A^T": At,
        "A^2": (A @ A).tocsr(),
        "(A^T)^2": (At @ At).tocsr(),
        "A^T A": (At @ A).tocsr(),
        "A A^T": (A @ At).tocsr(),
        "A_u": Au,
        "A_u^2": (Au @ Au).tocsr(),
    }


@dataclass
class HomophilyReport:
    """Per-operator homophily and compatibility plus effective homophily.

    ``h_gain`` is the relative gain ``(h_d - h_u) / h_u``; it is ``None``
    when ``h_u`` is zero.
    """

    node_homophily: float
    homophily: Dict[str, float]
    compatibility: Dict[str, np.ndarray]
    h_u_eff: float
    h_d_eff: float
    h_gain: Optional[float]
    zero_diag: bool = True
    homophily_alt_diag: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "node_homophily": self.node_homophily,
            "zero_diag": self.zero_diag,
            "homophily": dict(self.homophily),
            "homophily_with_diag" if self.zero_diag else "homophily_zero_diag":
                dict(self.homophily_alt_diag),
            "compatibility": {k: v.tolist() for k, v in self.compatibility.items()},
            "h_u_eff": self.h_u_eff,
            "h_d_eff": self.h_d_eff,
            "h_gain_eff": self.h_gain,
        }


def effective_homophily(g: Graph, y: LabelVector, zero_diag: bool = True) -> HomophilyReport:
    """Effective homophily over the directed and undirected 1/2-hop families.

    For an undirected ``g`` the directed family coincides with the
    undirected one, so the gain is zero.
    """
    y.require_known()
    mats = two_hop_matrices(g)
    h = {k: weighted_node_homophily(M, y, zero_diag) for k, M in mats.items()}
    alt = {k: weighted_node_homophily(M, y, not zero_diag) for k, M in mats.items()}
    compat = {k: weighted_compatibility(M, y, zero_diag) for k, M in mats.items()}
    h_d = max(h[k] for k in DIRECTED_SET)
    h_u = max(h[k] for k in UNDIRECTED_SET)
    gain = (h_d - h_u) / h_u if h_u > 0 else None
    return HomophilyReport(node_homophily(g, y), h, compat, h_u, h_d, gain,
                           zero_diag, alt)
