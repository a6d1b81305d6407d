"""
Dense symmetric eigensolver and graph Fourier analysis for small graphs.

:func:`dense_eigh` runs row-cyclic Jacobi rotations in a compiled kernel.
Matrices larger than ``JACOBI_MAX_N`` go to LAPACK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DataError, NumericalError
from .graph import Graph, normalized_laplacian

JACOBI_MAX_N = 512
MAX_DENSE_N = 5000


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str = ""
    sweeps: int = 0


def _off(A):
    off = A - np.diag(np.diag(A))
    return np.sqrt(np.sum(off * off))


@numba.njit(cache=True)
def _jacobi_sweep(A, V):
    """One row-cyclic sweep of Jacobi rotations applied in place to ``A`` and ``V``."""
    n = A.shape[0]
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = A[p, q]
            if abs(apq) < 1e-300:
                continue
            tau = (A[q, q] - A[p, p]) / (2.0 * apq)
            sgn = 1.0 if tau >= 0 else -1.0
            t = sgn / (abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            for k in range(n):
                akp = A[k, p]
                akq = A[k, q]
                A[k, p] = c * akp - s * akq
                A[k, q] = s * akp + c * akq
            for k in range(n):
                apk = A[p, k]
                aqk = A[q, k]
                A[p, k] = c * apk - s * aqk
                A[q, k] = s * apk + c * aqk
            A[p, q] = 0.0
            A[q, p] = 0.0
            for k in range(n):
                vkp = V[k, p]
                vkq = V[k, q]
                V[k, p] = c * vkp - s * vkq
                V[k, q] = s * vkp + c * vkq


def _fix_signs(V):
    """Make the largest-magnitude entry of each column positive (first index on ties)."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def jacobi_eigh(M, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi; stops when the off-diagonal Frobenius norm is below
    ``tol * max(1, ||M||_F)``. Returns ``(eigenvalues, eigenvectors, sweeps)``
    unsorted."""
    A = np.array(M, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    if n < 2:
        return np.diag(A).copy(), V, 0
    thresh = tol * max(1.0, np.linalg.norm(A))
    for sweep in range(1, max_sweeps + 1):
        if _off(A) < thresh:
            return np.diag(A).copy(), V, sweep - 1
        _jacobi_sweep(A, V)
        A = 0.5 * (A + A.T)
    if _off(A) < thresh:
        return np.diag(A).copy(), V, max_sweeps
    raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")


def dense_eigh(M, method: str = "auto", tol: float = 1e-12,
               source: str = "") -> EigenDecomposition:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_N`` rows). Eigenvector signs follow :func:`_fix_signs`.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DataError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n > MAX_DENSE_N:
        raise DataError(f"dense eigensolver limited to n <= {MAX_DENSE_N}, got {n}")
    if n and np.max(np.abs(M - M.T)) > 1e-10:
        raise DataError("matrix is not symmetric")
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "lapack"
    sweeps = 0
    if method == "jacobi":
        w, V, sweeps = jacobi_eigh(M, tol=tol)
    elif method == "lapack":
        w, V = np.linalg.eigh(0.5 * (M + M.T))
    else:
        raise DataError(f"unknown eigensolver method {method!r}")
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], _fix_signs(V[:, order]), source, sweeps)


def laplacian_decomposition(g: Graph, with_self_loops: bool = False,
                            method: str = "auto") -> EigenDecomposition:
    L = normalized_laplacian(g, with_self_loops).toarray()
    return dense_eigh(L, method=method,
                      source="laplacian[sym_selfloop]" if with_self_loops else "laplacian[sym]")


def laplacian_eigenvectors(g: Graph, k: int, with_self_loops: bool = False,
                           method: str = "auto") -> np.ndarray:
    """The ``k`` Laplacian eigenvectors with smallest eigenvalues (``n x k``)."""
    if k < 0 or k > g.n:
        raise DataError(f"need 0 <= k <= n = {g.n}, got k = {k}")
    return laplacian_decomposition(g, with_self_loops, method).eigenvectors[:, :k].copy()


def graph_fourier_transform(g: Graph, X, with_self_loops: bool = False,
                            decomposition: EigenDecomposition = None):
    """Signed coefficients ``U^T X``; returns ``(eigenvalues, coefficients)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != g.n:
        raise DataError(f"features have {X.shape[0]} rows but the graph has {g.n} nodes")
    dec = decomposition or laplacian_decomposition(g, with_self_loops)
    return dec.eigenvalues, dec.eigenvectors.T @ X


def graph_fourier_coefficients(g: Graph, X, with_self_loops: bool = False,
                               decomposition: EigenDecomposition = None) -> np.ndarray:
    """Magnitudes ``|U^T X|``, rows ordered by ascending eigenvalue."""
    return np.abs(graph_fourier_transform(g, X, with_self_loops, decomposition)[1])


def channel_average(magnitudes, normalize: bool = False) -> np.ndarray:
    """Average magnitudes over channels, optionally unit-normalizing each channel first."""
    M = np.asarray(magnitudes, dtype=np.float64)
    if normalize:
        norms = np.linalg.norm(M, axis=0)
        M = np.divide(M, norms, out=np.zeros_like(M), where=norms > 0)
    return M.mean(axis=1)


def high_frequency_fraction(eigenvalues, magnitudes) -> float:
    """Share of squared spectral mass on eigenvalues above the spectral median."""
    lam = np.asarray(eigenvalues)
    energy = np.asarray(magnitudes, dtype=np.float64) ** 2
    if energy.ndim == 1:
        energy = energy[:, None]
    total = energy.sum()
    if total == 0:
        return 0.0
    return float(energy[lam > np.median(lam)].sum() / total)
