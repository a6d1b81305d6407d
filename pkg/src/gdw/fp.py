"""
Feature Propagation, its closed-form harmonic solution, and imputation baselines.

Feature Propagation fills unknown feature entries by repeatedly diffusing
the feature matrix with a normalized adjacency and then resetting the
observed entries to their given values. Every channel has its own set of
observed nodes; one sparse-dense product per iteration serves all of them.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
import scipy.linalg

from .errors import DataError, NumericalError, ShapeError
from .graph import Graph, Norm, build_normalized, normalized_laplacian, spmm
from .labels import LabelVector

MAX_DENSE_N = 5000


class Impute(str, enum.Enum):
    FP = "fp"
    ZERO = "zero"
    RANDOM = "random"
    GLOBAL_MEAN = "global_mean"
    NEIGHBOR_MEAN = "neighbor_mean"


@dataclass
class ImputationResult:
    """Imputed matrix plus convergence bookkeeping.

    Observed entries of ``X`` are bitwise copies of the input.
    """

    X: np.ndarray
    method: str
    iterations: int = 0
    residual: float = 0.0
    warnings: List[str] = field(default_factory=list)


def _fp_norm(norm) -> Norm:
    norm = Norm(norm)
    if norm not in (Norm.SYM, Norm.SYM_SELFLOOP):
        raise DataError(f"feature propagation supports sym or sym_selfloop, got {norm.value}")
    return norm


def check_mask(X, mask, n: Optional[int] = None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[:, None]
    if mask.shape != X.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match feature shape {X.shape}")
    if n is not None and X.shape[0] != n:
        raise ShapeError(f"features have shape {X.shape} but the graph has {n} nodes")
    return X, mask


def feature_propagate(g: Graph, X, mask, max_iters: int = 40, tol: float = 1e-6,
                      norm: Union[Norm, str] = Norm.SYM, init=None) -> ImputationResult:
    """Impute unknown entries (``mask == False``) by Feature Propagation.

    Unknown entries start at zero (or at ``init``). Each iteration computes
    ``X <- Ã X`` and resets observed entries. The loop stops once the largest
    change on unknown entries drops below ``tol``; ``tol=0`` runs all
    ``max_iters`` iterations.
    """
    X, mask = check_mask(X, mask, g.n)
    norm = _fp_norm(norm)
    if tol < 0:
        raise DataError(f"tolerance must be non-negative, got {tol}")
    if max_iters < 1:
        raise DataError(f"need at least one iteration, got {max_iters}")
    S = build_normalized(g, norm)
    unknown = ~mask
    cur = np.where(mask, X, 0.0)
    if init is not None:
        init = np.broadcast_to(np.asarray(init, dtype=np.float64), X.shape)
        cur[unknown] = init[unknown]
    observed = X[mask]
    residual = 0.0
    it = 0
    for it in range(1, max_iters + 1):
        nxt = spmm(S, cur)
        nxt[mask] = observed
        residual = float(np.max(np.abs(nxt[unknown] - cur[unknown]))) if unknown.any() else 0.0
        cur = nxt
        if residual < tol:
            break
    return ImputationResult(cur, Impute.FP.value, it, residual)


def _solve_partial_pivot(A, B):
    """LU with partial pivoting; raises on an exactly singular pivot."""
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.any(np.diag(lu) == 0.0):
        raise NumericalError("singular sub-Laplacian in a component with known features")
    return scipy.linalg.lu_solve((lu, piv), B)


def harmonic_closed_form(g: Graph, X, mask, norm: Union[Norm, str] = Norm.SYM,
                         return_warnings: bool = False):
    """Minimum Dirichlet energy interpolation ``x_u = -L_uu^-1 L_uk x_k``.

    Solved per channel and per connected component. Components without any
    observed entry in a channel are set to zero and reported as a warning.
    """
    X, mask = check_mask(X, mask, g.n)
    norm = _fp_norm(norm)
    if g.n > MAX_DENSE_N:
        raise DataError(f"closed-form solve limited to n <= {MAX_DENSE_N}, got {g.n}")
    L = normalized_laplacian(g, norm is Norm.SYM_SELFLOOP).toarray()
    comp = g.connected_components()
    out = np.where(mask, X, 0.0)
    notes = []
    for c in range(X.shape[1]):
        known = mask[:, c]
        for k in np.unique(comp):
            members = comp == k
            u = np.flatnonzero(members & ~known)
            if u.size == 0:
                continue
            kn = np.flatnonzero(members & known)
            if kn.size == 0:
                notes.append(f"channel {c}: component {k} has no observed entries; set to 0")
                continue
            rhs = -L[np.ix_(u, kn)] @ X[kn, c]
            out[u, c] = _solve_partial_pivot(L[np.ix_(u, u)], rhs)
    if notes:
        warnings.warn(f"{len(notes)} channel-components without observed entries", RuntimeWarning)
    return (out, notes) if return_warnings else out


def dirichlet_energy(g: Graph, X, norm: Union[Norm, str] = Norm.SYM,
                     form: str = "quadratic") -> float:
    """Dirichlet energy of ``X`` summed over channels.

    ``form="quadratic"`` is ``1/2 tr(X^T L X)`` with ``L = I - Ã``, evaluated
    as a sum of squares of degree-scaled differences so it never goes
    negative. ``form="pairwise"`` is ``1/2 sum_ij ã_ij (x_i - x_j)^2``;
    the two coincide only when the rows of ``Ã`` sum to one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != g.n:
        raise ShapeError(f"features have shape {X.shape} but the graph has {g.n} nodes")
    norm = _fp_norm(norm)
    if form == "pairwise":
        S = build_normalized(g, norm).matrix.tocoo()
        diff = X[S.row] - X[S.col]
        return float(0.5 * np.sum(S.data[:, None] * diff * diff))
    if form != "quadratic":
        raise DataError(f"unknown energy form {form!r}")
    A = g.symmetrized().adjacency.tocoo()
    deg = np.bincount(A.row, minlength=g.n).astype(np.float64)
    if norm is Norm.SYM_SELFLOOP:
        deg = deg + 1.0
    scale = np.zeros(g.n)
    scale[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    Z = X * scale[:, None]
    diff = Z[A.row] - Z[A.col]
    energy = 0.25 * np.sum(diff * diff)
    # isolated nodes keep the identity part of the Laplacian
    energy += 0.5 * np.sum(X[deg == 0] ** 2)
    return float(energy)


def impute(g: Optional[Graph], X, mask, method: Union[Impute, str],
           seed: Optional[int] = None, **fp_kwargs) -> ImputationResult:
    """Fill unknown entries with one of the baseline strategies or FP.

    ``random`` draws standard normals from ``numpy.random.default_rng(seed)``;
    ``neighbor_mean`` averages observed values of the (undirected) neighbours
    and falls back to 0 when none is observed.
    """
    method = Impute(method)
    X, mask = check_mask(X, mask, None if g is None else g.n)
    if method is Impute.FP:
        if g is None:
            raise DataError("feature propagation needs a graph")
        return feature_propagate(g, X, mask, **fp_kwargs)
    unknown = ~mask
    out = np.where(mask, X, 0.0)
    if method is Impute.RANDOM:
        if seed is None:
            raise DataError("random imputation needs an explicit seed")
        draws = np.random.default_rng(seed).standard_normal(X.shape)
        out[unknown] = draws[unknown]
    elif method is Impute.GLOBAL_MEAN:
        counts = mask.sum(axis=0)
        sums = np.where(mask, X, 0.0).sum(axis=0)
        means = np.divide(sums, counts, out=np.zeros(X.shape[1]), where=counts > 0)
        out = np.where(mask, X, means[None, :])
    elif method is Impute.NEIGHBOR_MEAN:
        if g is None:
            raise DataError("neighbor_mean imputation needs a graph")
        A = g.symmetrized().adjacency
        sums = np.asarray(A @ np.where(mask, X, 0.0))
        counts = np.asarray(A @ mask.astype(np.float64))
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        out = np.where(mask, X, means)
    out[mask] = X[mask]
    return ImputationResult(out, method.value)


def label_propagation(g: Graph, y: LabelVector, alpha: float = 0.9, iters: int = 50,
                      norm: Union[Norm, str] = Norm.SYM_SELFLOOP):
    """Propagate one-hot known labels: ``Y <- alpha Ã Y + (1 - alpha) Y0``.

    Returns ``(soft_scores, predictions)``; ties go to the lowest class id.
    """
    if len(y) != g.n:
        raise ShapeError(f"graph has {g.n} nodes but there are {len(y)} labels")
    if not y.known.any():
        raise DataError("label propagation needs at least one known label")
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    S = build_normalized(g, norm)
    Y0 = y.one_hot()
    Y = Y0.copy()
    for _ in range(iters):
        Y = alpha * spmm(S, Y) + (1.0 - alpha) * Y0
    return Y, np.argmax(Y, axis=1)
