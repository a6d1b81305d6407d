"""
Color refinement on (directed) graphs.

Every iteration maps a node to the signature ``(own color, neighbour color
multisets...)`` and interns the distinct signatures into dense ids in
sorted order. Interning the full signature makes the relabeling injective
by construction, with no hashing involved, and sorting makes the ids
canonical: isomorphic graphs receive identical color histograms.

Modes
-----
``wl1``      classic 1-WL on the symmetrized neighbour set
``u_wl``     one multiset pooling out- and in-neighbours (direction-blind)
``d_wl``     separate out- and in-neighbour multisets
``out_only`` out-neighbours only
``in_only``  in-neighbours only
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from .graph import Graph


class WLMode(str, enum.Enum):
    WL1 = "wl1"
    U_WL = "u_wl"
    D_WL = "d_wl"
    OUT_ONLY = "out_only"
    IN_ONLY = "in_only"


_ALIASES = {"dwl": "d_wl", "uwl": "u_wl", "out": "out_only", "in": "in_only"}


def parse_mode(mode: Union[WLMode, str]) -> WLMode:
    if isinstance(mode, WLMode):
        return mode
    m = mode.lower().replace("-", "_")
    return WLMode(_ALIASES.get(m, m))


@dataclass
class Coloring:
    """Per-iteration colors; ``history[0]`` is the constant initial coloring."""

    history: List[np.ndarray]
    stable_iteration: int

    @property
    def colors(self) -> np.ndarray:
        return self.history[-1]

    @property
    def num_colors(self) -> List[int]:
        return [int(np.unique(c).size) for c in self.history]

    def histogram(self, colors: Optional[np.ndarray] = None) -> Tuple[Tuple[int, int], ...]:
        """Sorted ``(color, count)`` pairs of the final (or given) coloring."""
        c = self.colors if colors is None else colors
        return tuple(sorted(Counter(c.tolist()).items()))

    def partition(self, t: int = -1) -> List[Tuple[int, ...]]:
        """Color classes at iteration ``t`` as sorted node tuples."""
        c = self.history[t]
        classes = {}
        for v, col in enumerate(c.tolist()):
            classes.setdefault(col, []).append(v)
        return sorted(tuple(vs) for vs in classes.values())


def _neighbour_lists(g: Graph, mode: WLMode):
    n = g.n
    out = [g.out_neighbors(v).tolist() for v in range(n)]
    inn = [g.in_neighbors(v).tolist() for v in range(n)]
    if mode is WLMode.WL1:
        return [sorted(set(out[v]) | set(inn[v])) for v in range(n)], None
    if mode is WLMode.U_WL:
        return [out[v] + inn[v] for v in range(n)], None
    if mode is WLMode.D_WL:
        return out, inn
    if mode is WLMode.OUT_ONLY:
        return out, None
    return inn, None


def _refine(g: Graph, mode: WLMode, max_iters: Optional[int]) -> Coloring:
    nbr, nbr2 = _neighbour_lists(g, mode)
    colors = np.zeros(g.n, dtype=np.int64)
    history = [colors]
    limit = g.n if max_iters is None else max_iters
    count = 1 if g.n else 0
    stable = 0
    for t in range(1, limit + 1):
        cl = colors.tolist()
        sigs = []
        for v in range(g.n):
            sig = (cl[v], tuple(sorted(cl[u] for u in nbr[v])))
            if nbr2 is not None:
                sig += (tuple(sorted(cl[u] for u in nbr2[v])),)
            sigs.append(sig)
        # ids follow sorted signature order, so equal graphs up to relabeling get equal ids
        table = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
        new = np.fromiter((table[sig] for sig in sigs), dtype=np.int64, count=g.n)
        history.append(new)
        colors = new
        if len(table) == count:
            stable = t - 1
            break
        count = len(table)
        stable = t
    return Coloring(history, stable)


def color_refine(g: Graph, mode: Union[WLMode, str] = WLMode.D_WL,
                 max_iters: Optional[int] = None) -> Coloring:
    """Refine a constant initial coloring until the partition is stable.

    The loop ends at the first iteration that does not split any color
    class (that iteration is kept in ``history``), or after ``max_iters``
    iterations (default ``n``).
    """
    return _refine(g, parse_mode(mode), max_iters)


def disjoint_union(g1: Graph, g2: Graph) -> Graph:
    s1, d1 = g1.edges()
    s2, d2 = g2.edges()
    directed = g1.directed or g2.directed
    return Graph.from_edges(g1.n + g2.n, np.concatenate([s1, s2 + g1.n]),
                            np.concatenate([d1, d2 + g1.n]), directed=directed)


@dataclass
class Distinguishability:
    distinguishable: bool
    iterations: int
    histograms: Tuple[tuple, tuple]
    coloring: Optional[Coloring] = None

    def to_dict(self) -> dict:
        return {
            "distinguishable": self.distinguishable,
            "iterations": self.iterations,
            "histograms": [[list(p) for p in h] for h in self.histograms],
        }


def compare(g1: Graph, g2: Graph, mode: Union[WLMode, str] = WLMode.D_WL,
            max_iters: Optional[int] = None) -> Distinguishability:
    """Refine both graphs jointly and compare their color histograms per iteration."""
    mode = parse_mode(mode)
    if g1.n != g2.n:
        return Distinguishability(True, 0, ((), ()))
    col = _refine(disjoint_union(g1, g2), mode, max_iters)
    for t, c in enumerate(col.history):
        h1 = col.histogram(c[: g1.n])
        h2 = col.histogram(c[g1.n:])
        if h1 != h2:
            return Distinguishability(True, t, (h1, h2), col)
    return Distinguishability(False, len(col.history) - 1, (h1, h2), col)


def distinguishable(g1: Graph, g2: Graph, mode: Union[WLMode, str] = WLMode.D_WL,
                    max_iters: Optional[int] = None) -> bool:
    """True iff the joint refinement separates the two graphs' color histograms."""
    return compare(g1, g2, mode, max_iters).distinguishable
