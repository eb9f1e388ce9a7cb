"""Motif partitioning and candidate recurrent edge construction.

A recurrent layer of ``n`` neurons is tiled by identical motifs of size ``v``
(``v`` must divide ``n`` exactly; neuron ``k`` belongs to motif ``k // v``).
Candidate recurrent connections are

* intra-motif: every ordered pair inside a motif, self-loops included
  (``v**2`` per motif), and
* inter-motif: corresponding offsets of adjacent motifs in a 1-D chain,
  both directions, no wraparound (``2 * v`` per adjacent pair).

Edge sets for different candidate motif sizes are constructed independently;
a directed pair that appears under several sizes carries independent
parameters under each.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidSpecError, NonDivisibleError


@dataclass(frozen=True)
class EdgeSet:
    """Candidate directed edges (src -> dst), sorted by (dst, src)."""

    dst: np.ndarray
    src: np.ndarray
    inter: np.ndarray  # True where the edge crosses motifs

    def __len__(self) -> int:
        return len(self.dst)


def partition_motifs(n: int, v: int) -> np.ndarray:
    """Map each neuron index to its motif index for motif size ``v``."""
    if n % v != 0:
        raise NonDivisibleError(f"motif size {v} does not divide layer size {n}")
    return np.arange(n) // v


def candidate_edges(n: int, v: int, inter_enabled: bool = True) -> EdgeSet:
    """Build the candidate edge set for one motif size.

    Deterministic: edges are sorted by (dst, src) and duplicate-free.
    """
    if n % v != 0:
        raise NonDivisibleError(f"motif size {v} does not divide layer size {n}")
    n_motifs = n // v
    dst, src, inter = [], [], []
    for m in range(n_motifs):
        base = m * v
        for i in range(base, base + v):
            for r in range(base, base + v):
                dst.append(i)
                src.append(r)
                inter.append(False)
    if inter_enabled:
        for m in range(n_motifs - 1):
            for o in range(v):
                a = m * v + o
                b = (m + 1) * v + o
                dst.append(b)
                src.append(a)
                inter.append(True)
                dst.append(a)
                src.append(b)
                inter.append(True)
    dst = np.asarray(dst, dtype=np.intp)
    src = np.asarray(src, dtype=np.intp)
    inter = np.asarray(inter, dtype=bool)
    order = np.lexsort((src, dst))
    return EdgeSet(dst=dst[order], src=src[order], inter=inter[order])


@dataclass(frozen=True)
class LayerLayout:
    """Immutable motif partition and candidate edges for every motif size."""

    n: int
    sizes: tuple[int, ...]
    edges: Mapping[int, EdgeSet] = field(repr=False)
    assignments: Mapping[int, np.ndarray] = field(repr=False)
    inter_enabled: bool = True

    def restrict(self, v: int) -> "LayerLayout":
        """Drop every candidate size except ``v`` (used after the size is fixed)."""
        if v not in self.sizes:
            raise ValueError(f"size {v} not among candidates {self.sizes}")
        return LayerLayout(n=self.n, sizes=(v,), edges={v: self.edges[v]},
                           assignments={v: self.assignments[v]},
                           inter_enabled=self.inter_enabled)


def build_layout(n: int, sizes, inter_enabled: bool = True) -> LayerLayout:
    """Validate the candidate size set and construct all edge sets."""
    sizes = tuple(int(v) for v in sizes)
    if len(sizes) == 0:
        raise InvalidSpecError("candidate motif size set is empty")
    if any(v <= 0 for v in sizes):
        raise InvalidSpecError(f"motif sizes must be positive, got {sizes}")
    if list(sizes) != sorted(set(sizes)):
        raise InvalidSpecError(f"motif sizes must be strictly increasing, got {sizes}")
    for v in sizes:
        if n % v != 0:
            raise NonDivisibleError(f"motif size {v} does not divide layer size {n}")
    edges = {v: candidate_edges(n, v, inter_enabled) for v in sizes}
    assignments = {v: partition_motifs(n, v) for v in sizes}
    return LayerLayout(n=n, sizes=sizes, edges=edges, assignments=assignments,
                       inter_enabled=inter_enabled)
