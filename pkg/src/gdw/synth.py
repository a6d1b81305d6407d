"""
Seeded synthetic graphs, labels, features and masks.

All randomness comes from ``numpy.random.Generator`` (PCG64) seeded with an
explicit integer, so a seed and a call sequence reproduce the same output on
every platform. ``spawn`` derives independent child streams.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from .errors import DataError
from .graph import Graph
from .labels import LabelVector


def make_rng(seed) -> np.random.Generator:
    if seed is None:
        raise DataError("an explicit seed is required")
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def spawn(seed, k: int) -> List[int]:
    """``k`` independent child seeds derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(k)
    return [int(c.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


def _sample_distinct(rng, total: int, p: float) -> np.ndarray:
    """Indices in ``[0, total)`` each kept independently with probability ``p``."""
    if total == 0 or p <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    k = int(rng.binomial(total, p))
    return np.sort(rng.choice(total, size=k, replace=False, shuffle=False)).astype(np.int64)


def gen_erdos_renyi(n: int, p: float, directed: bool = False, seed=None) -> Graph:
    """G(n, p) over ordered (directed) or unordered pairs, without self-loops.

    The edge count is drawn from the binomial law and a uniform subset of
    pairs of that size is selected, which matches independent inclusion.
    """
    if not 0.0 <= p <= 1.0:
        raise DataError(f"edge probability must lie in [0, 1], got {p}")
    rng = make_rng(seed)
    if n < 2:
        return Graph.from_edges(max(n, 0), [], [], directed)
    if directed:
        idx = _sample_distinct(rng, n * (n - 1), p)
        src = idx // (n - 1)
        dst = idx % (n - 1)
        dst = dst + (dst >= src)
    else:
        idx = _sample_distinct(rng, n * (n - 1) // 2, p)
        # row i of the upper triangle starts at offset i*n - i*(i+1)/2
        rows = np.arange(n, dtype=np.int64)
        offsets = rows * n - rows * (rows + 1) // 2
        src = np.searchsorted(offsets, idx, side="right") - 1
        dst = idx - offsets[src] + src + 1
    return Graph.from_edges(n, src, dst, directed)


def target_homophily_compat(C: int, h: float) -> np.ndarray:
    """``h`` on the diagonal and ``(1 - h) / (C - 1)`` elsewhere."""
    if C < 2:
        raise DataError(f"need at least two classes, got {C}")
    if not 0.0 <= h <= 1.0:
        raise DataError(f"target homophily must lie in [0, 1], got {h}")
    H = np.full((C, C), (1.0 - h) / (C - 1))
    np.fill_diagonal(H, h)
    return H


def _check_compat(H, C):
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (C, C):
        raise DataError(f"compatibility matrix must be {C}x{C}, got {H.shape}")
    if np.any(H < 0) or np.any(np.abs(H.sum(axis=1) - 1.0) > 1e-12):
        raise DataError("compatibility matrix must be nonnegative and row-stochastic")
    return H


def gen_pa_labeled(n: int, C: int, m: int, H, seed=None) -> Tuple[Graph, LabelVector]:
    """Directed preferential attachment with class-dependent affinity.

    ``m + 1`` isolated seed nodes start the process. Every later node gets a
    uniform label and links to ``m`` distinct earlier nodes drawn without
    replacement with probability proportional to
    ``(in_degree(u) + 1) * H[y_v, y_u]``. If fewer than ``m`` earlier nodes
    have positive affinity, the remaining targets are drawn proportionally
    to ``in_degree(u) + 1`` among the others.
    """
    if not n > m >= 1:
        raise DataError(f"need n > m >= 1, got n={n}, m={m}")
    H = _check_compat(H, C)
    rng = make_rng(seed)
    y = rng.integers(0, C, size=n)
    indeg = np.zeros(n)
    src = np.empty((n - m - 1) * m, dtype=np.int64)
    dst = np.empty_like(src)
    e = 0
    for v in range(m + 1, n):
        w = (indeg[:v] + 1.0) * H[y[v], y[:v]]
        pos = np.flatnonzero(w > 0)
        if pos.size >= m:
            targets = rng.choice(v, size=m, replace=False, p=w / w.sum())
        else:
            rest = np.flatnonzero(w <= 0)
            wr = indeg[rest] + 1.0
            extra = rng.choice(rest, size=m - pos.size, replace=False, p=wr / wr.sum())
            targets = np.concatenate([pos, extra])
        src[e:e + m] = v
        dst[e:e + m] = targets
        indeg[targets] += 1.0
        e += m
    return Graph.from_edges(n, src, dst, directed=True), LabelVector(y, C)


def gen_class_features(y: LabelVector, d: int, sep: float, noise: float,
                       seed=None) -> np.ndarray:
    """Gaussian class clusters: ``sep * u_c + noise * N(0, I)`` with unit ``u_c``."""
    if d < 1:
        raise DataError(f"feature dimension must be >= 1, got {d}")
    labels = y.require_known()
    rng = make_rng(seed)
    U = rng.standard_normal((y.num_classes, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return sep * U[labels] + noise * rng.standard_normal((labels.size, d))


def _neighbour_means(A, x):
    deg = np.diff(A.indptr)
    sums = A @ x
    return np.divide(sums, deg, out=np.zeros_like(sums), where=deg > 0)


def gen_directed_task(n: int, p: float, seed=None) -> Tuple[Graph, np.ndarray, LabelVector]:
    """Directed ER graph with ``U[-1, 1]`` scalar features.

    Label 1 iff the mean feature of in-neighbours is strictly greater than
    that of out-neighbours; empty neighbourhoods have mean 0.
    """
    if seed is None:
        raise DataError("an explicit seed is required")
    g_seed, x_seed = np.random.SeedSequence(seed).spawn(2)
    g = gen_erdos_renyi(n, p, directed=True, seed=g_seed)
    x = make_rng(x_seed).uniform(-1.0, 1.0, size=n)
    in_mean = _neighbour_means(g.adjacency.T.tocsr(), x)
    out_mean = _neighbour_means(g.adjacency, x)
    y = (in_mean > out_mean).astype(np.int64)
    return g, x[:, None], LabelVector(y, 2)


def random_mask(n: int, d: int, missing_rate: float, seed=None) -> np.ndarray:
    """Boolean ``n x d`` mask; each entry is missing independently with ``missing_rate``."""
    if not 0.0 <= missing_rate <= 1.0:
        raise DataError(f"missing rate must lie in [0, 1], got {missing_rate}")
    rng = make_rng(seed)
    return rng.random((n, d)) >= missing_rate
