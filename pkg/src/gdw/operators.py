"""
Diffusion operator families and precomputed feature banks.

An :class:`OperatorSpec` is a left-to-right product of factor powers, e.g.
``dir_bwd^1*dir_fwd^1`` or ``ppr(0.05,64,1e-4)^1``. Specs can be turned
into explicit sparse matrices (:func:`materialize`) or applied to a feature
matrix without forming the product (:func:`apply_spec`), which is what
:func:`precompute_sign_features` does.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numba
import numpy as np
import scipy.sparse as sp

from .errors import DataError, NumericalError, ShapeError
from .graph import (Graph, Norm, SparseOperator, build_normalized, identity,
                    spmm, spspmm)
from .io import read_gdm, write_gdm

TRIANGLE = "triangle"
PPR = "ppr"
_NORM_BASES = {m.value for m in Norm}
_DIRECTED_BASES = {Norm.DIR_FWD.value, Norm.DIR_BWD.value}


@dataclass(frozen=True)
class Factor:
    """One ``base^power`` term of an operator product."""

    base: str
    power: int = 1
    alpha: float = 0.05
    terms: int = 64
    prune: float = 1e-4
    ppr_base: str = Norm.SYM_SELFLOOP.value

    def __post_init__(self):
        if self.base not in _NORM_BASES | {TRIANGLE, PPR}:
            raise DataError(f"unknown operator base {self.base!r}")
        if self.power < 1:
            raise DataError(f"operator powers must be >= 1, got {self.power}")
        if self.base == PPR:
            if not 0.0 < self.alpha < 1.0:
                raise DataError(f"PPR restart probability must be in (0, 1), got {self.alpha}")
            if self.terms < 1:
                raise DataError(f"PPR needs at least one series term, got {self.terms}")
            if self.ppr_base not in _NORM_BASES:
                raise DataError(f"unknown PPR base {self.ppr_base!r}")

    @property
    def unit(self) -> "Factor":
        return Factor(self.base, 1, self.alpha, self.terms, self.prune, self.ppr_base)

    def __str__(self):
        if self.base == PPR:
            inner = f"{self.alpha:g},{self.terms},{self.prune:g}"
            if self.ppr_base != Norm.SYM_SELFLOOP.value:
                inner += f",{self.ppr_base}"
            return f"ppr({inner})^{self.power}"
        return f"{self.base}^{self.power}"


@dataclass(frozen=True)
class OperatorSpec:
    factors: Tuple[Factor, ...]

    def __post_init__(self):
        if not self.factors:
            raise DataError("operator spec needs at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def directed_only(self) -> bool:
        return any(f.base in _DIRECTED_BASES for f in self.factors)

    def unit_factors(self) -> List[Factor]:
        """Factors expanded so that every power is 1 (left to right)."""
        return [f.unit for f in self.factors for _ in range(f.power)]

    def __str__(self):
        return "*".join(str(f) for f in self.factors)


_FACTOR_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*(?:\^\s*(\d+))?\s*$")


def _parse_factor(text: str) -> Factor:
    m = _FACTOR_RE.match(text.lower())
    if not m:
        raise DataError(f"cannot parse operator factor {text!r}")
    base, args, power = m.group(1), m.group(2), int(m.group(3) or 1)
    if base == PPR:
        parts = [p.strip() for p in args.split(",")] if args else []
        if len(parts) > 4:
            raise DataError(f"ppr takes at most 4 arguments, got {text!r}")
        try:
            kw = {}
            if len(parts) > 0 and parts[0]:
                kw["alpha"] = float(parts[0])
            if len(parts) > 1:
                kw["terms"] = int(parts[1])
            if len(parts) > 2:
                kw["prune"] = float(parts[2])
            if len(parts) > 3:
                kw["ppr_base"] = parts[3]
        except ValueError:
            raise DataError(f"bad ppr arguments in {text!r}") from None
        return Factor(PPR, power, **kw)
    if args is not None:
        raise DataError(f"operator {base!r} takes no arguments")
    return Factor(base, power)


def parse_spec(text: str) -> OperatorSpec:
    """Parse one product spec such as ``"dir_bwd^1*dir_fwd^1"``."""
    return OperatorSpec(tuple(_parse_factor(t) for t in text.split("*")))


def parse_spec_list(text: str) -> List[OperatorSpec]:
    """Parse a comma-separated list of specs; commas inside ``(...)`` are kept."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        out.append("".join(cur))
    return [parse_spec(s) for s in out if s.strip()]


# ---------------------------------------------------------------------------
# Triangle operator
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _edge_triangle_counts(indptr, indices):
    """Common-neighbour count for every stored edge of a symmetric CSR."""
    n = indptr.size - 1
    w = np.zeros(indices.size, dtype=np.float64)
    for i in range(n):
        a0, a1 = indptr[i], indptr[i + 1]
        for e in range(a0, a1):
            j = indices[e]
            if j < i:
                continue
            b0, b1 = indptr[j], indptr[j + 1]
            # scan the shorter list, binary search the longer one
            if a1 - a0 <= b1 - b0:
                s0, s1, l0, l1 = a0, a1, b0, b1
            else:
                s0, s1, l0, l1 = b0, b1, a0, a1
            c = 0
            lo = l0
            for k in range(s0, s1):
                v = indices[k]
                pos = lo + np.searchsorted(indices[lo:l1], v)
                if pos < l1 and indices[pos] == v:
                    c += 1
                lo = pos
            w[e] = c
            # mirror entry j -> i
            pos = b0 + np.searchsorted(indices[b0:b1], i)
            w[pos] = c
    return w


def triangle_counts(g: Graph) -> SparseOperator:
    """Raw weights: number of triangles containing each undirected edge."""
    u = g.symmetrized()
    w = _edge_triangle_counts(u.out_indptr, u.out_indices)
    M = sp.csr_matrix((w, u.out_indices.copy(), u.out_indptr.copy()), shape=(g.n, g.n))
    return SparseOperator(M, "triangle_counts")


def triangle_adjacency(g: Graph) -> SparseOperator:
    """Row-normalized triangle-induced adjacency.

    Edges lying in no triangle drop out; rows left without entries are zero.
    Directed graphs are symmetrized first.
    """
    W = triangle_counts(g).matrix
    s = np.asarray(W.sum(axis=1)).ravel()
    inv = np.zeros_like(s)
    inv[s > 0] = 1.0 / s[s > 0]
    rows = np.repeat(np.arange(g.n), np.diff(W.indptr))
    M = sp.csr_matrix((W.data * inv[rows], W.indices, W.indptr), shape=W.shape)
    return SparseOperator(M, TRIANGLE)


# ---------------------------------------------------------------------------
# Personalized PageRank
# ---------------------------------------------------------------------------


def _check_alpha(alpha, terms):
    if not 0.0 < alpha < 1.0:
        raise DataError(f"PPR restart probability must be in (0, 1), got {alpha}")
    if terms < 1:
        raise DataError(f"PPR needs at least one series term, got {terms}")


def ppr_matrix(base: SparseOperator, alpha: float, terms: int,
               prune: float = 0.0) -> SparseOperator:
    """Truncated series ``alpha * sum_{t<terms} (1-alpha)^t base^t``.

    Approximates ``alpha (I - (1-alpha) base)^-1``. Entries with magnitude
    below ``prune`` are dropped once the sum is complete.
    """
    _check_alpha(alpha, terms)
    n = base.rows
    term = identity(n).matrix
    total = alpha * term
    B = base.matrix
    for _ in range(1, terms):
        term = (1.0 - alpha) * (B @ term)
        total = total + alpha * term
    total = total.tocsr()
    if prune > 0:
        total.data[np.abs(total.data) < prune] = 0.0
        total.eliminate_zeros()
    return SparseOperator(total, f"ppr({alpha:g},{terms},{prune:g})[{base.provenance}]")


def ppr_apply(base: SparseOperator, X, alpha: float, terms: int) -> np.ndarray:
    """Apply the truncated PPR series to ``X`` with ``terms - 1`` sparse-dense products."""
    _check_alpha(alpha, terms)
    X = np.asarray(X, dtype=np.float64)
    term = X
    total = alpha * X
    for _ in range(1, terms):
        term = (1.0 - alpha) * spmm(base, term)
        total = total + alpha * term
    return total


# ---------------------------------------------------------------------------
# Materialization and application
# ---------------------------------------------------------------------------


class _FactorCache:
    """Per-graph cache of unit factor matrices."""

    def __init__(self, g: Graph):
        self.g = g
        self._ops: Dict[Factor, SparseOperator] = {}

    def base_matrix(self, f: Factor) -> SparseOperator:
        if f.base == PPR:
            key = Factor(f.ppr_base)
        else:
            key = f.unit
        if key not in self._ops:
            if key.base == TRIANGLE:
                self._ops[key] = triangle_adjacency(self.g)
            else:
                self._ops[key] = build_normalized(self.g, key.base)
        return self._ops[key]

    def unit_matrix(self, f: Factor) -> SparseOperator:
        if f.base != PPR:
            return self.base_matrix(f)
        key = f.unit
        if key not in self._ops:
            self._ops[key] = ppr_matrix(self.base_matrix(f), f.alpha, f.terms, f.prune)
        return self._ops[key]


def _check_directed(spec: OperatorSpec, g: Graph):
    if spec.directed_only and not g.directed:
        raise DataError(f"operator {spec} requires a directed graph")


def materialize(spec: Union[OperatorSpec, str], g: Graph,
                _cache: Optional[_FactorCache] = None) -> SparseOperator:
    """Explicit sparse matrix of ``spec`` on ``g`` (left-to-right product)."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    _check_directed(spec, g)
    cache = _cache or _FactorCache(g)
    units = spec.unit_factors()
    out = cache.unit_matrix(units[0])
    for f in units[1:]:
        out = spspmm(out, cache.unit_matrix(f))
    return SparseOperator(out.matrix, str(spec))


def apply_spec(spec: Union[OperatorSpec, str], g: Graph, X,
               _cache: Optional[_FactorCache] = None,
               _memo: Optional[dict] = None) -> np.ndarray:
    """Compute ``spec @ X`` right to left without forming the operator.

    PPR factors are applied as the truncated series on ``X`` directly, so no
    pruning happens on this path.
    """
    if isinstance(spec, str):
        spec = parse_spec(spec)
    _check_directed(spec, g)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.n:
        raise ShapeError(f"features have {X.shape[0]} rows but the graph has {g.n} nodes")
    cache = _cache or _FactorCache(g)
    memo = {} if _memo is None else _memo
    units = spec.unit_factors()
    Y = X
    suffix: Tuple[Factor, ...] = ()
    for f in reversed(units):
        suffix = (f,) + suffix
        if suffix in memo:
            Y = memo[suffix]
            continue
        if f.base == PPR:
            Y = ppr_apply(cache.base_matrix(f), Y, f.alpha, f.terms)
        else:
            Y = spmm(cache.base_matrix(f), Y)
        memo[suffix] = Y
    return Y


# ---------------------------------------------------------------------------
# Feature banks
# ---------------------------------------------------------------------------


@dataclass
class FeatureBank:
    """Precomputed blocks ``[X, A_1 X, ..., A_r X]``."""

    blocks: List[np.ndarray]
    specs: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.blocks:
            raise DataError("a feature bank needs at least the raw block")
        n, d = self.blocks[0].shape
        for k, B in enumerate(self.blocks):
            if B.shape != (n, d):
                raise ShapeError(f"block {k} has shape {B.shape}, expected {(n, d)}")
        if len(self.specs) != len(self.blocks) - 1:
            raise DataError("need one spec per non-raw block")

    @property
    def n(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def d(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def r(self) -> int:
        return len(self.blocks) - 1

    def __len__(self):
        return len(self.blocks)

    def take(self, idx) -> "FeatureBank":
        """Bank restricted to the rows in ``idx``."""
        idx = np.asarray(idx)
        return FeatureBank([B[idx] for B in self.blocks], list(self.specs))

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for k, B in enumerate(self.blocks):
            fname = f"block_{k}.gdm"
            write_gdm(directory / fname, B)
            entries.append({"spec": "identity" if k == 0 else self.specs[k - 1],
                            "file": fname})
        manifest = {"n": self.n, "d": self.d, "blocks": entries}
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "FeatureBank":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read bank manifest in {directory}: {exc}") from None
        blocks = [read_gdm(directory / b["file"]) for b in manifest["blocks"]]
        specs = [b["spec"] for b in manifest["blocks"][1:]]
        bank = cls(blocks, specs)
        if (bank.n, bank.d) != (manifest["n"], manifest["d"]):
            raise DataError("bank manifest shape does not match its blocks")
        return bank


def precompute_sign_features(g: Graph, X, specs: Sequence[Union[OperatorSpec, str]]
                             ) -> FeatureBank:
    """Build the bank ``[X, A_1 X, ..., A_r X]`` for the given operator specs.

    Shared right-hand suffixes are computed once, so ``[sym^1, sym^2]`` costs
    two sparse-dense products.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != g.n:
        raise ShapeError(f"features have shape {X.shape} but the graph has {g.n} nodes")
    if not np.all(np.isfinite(X)):
        raise NumericalError("features contain NaN or infinite values")
    specs = [parse_spec(s) if isinstance(s, str) else s for s in specs]
    cache = _FactorCache(g)
    memo: dict = {}
    blocks = [X.copy()]
    for s in specs:
        blocks.append(apply_spec(s, g, X, _cache=cache, _memo=memo))
    return FeatureBank(blocks, [str(s) for s in specs])
