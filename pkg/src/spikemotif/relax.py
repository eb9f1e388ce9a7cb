"""Continuous relaxation of the categorical architecture choices.

Motif size and per-edge connection type are discrete decisions. Both are
relaxed to softmax selection probabilities over their option sets so the
architecture becomes differentiable: for motif sizes ``p_v = softmax(logits)``
over the candidate set, and per candidate edge a three-way softmax over
connection types.

Connection types and their weight semantics:

* excitatory  - weight trained, clamped non-negative,
* inhibitory  - weight fixed at ``-w_inh``, never trained,
* absent      - contributes exactly zero current.

The relaxed recurrent drive into neuron ``i`` mixes every candidate edge
under every candidate motif size:

    I_i = sum_v p_v * sum_{(i,r) in E_v} sum_c p_irc * w_irc * a_r[t-1]

Optimization happens on the raw logits; gradients with respect to the
selection probabilities are chained through the softmax Jacobian elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyOptionsError, NonFiniteError, ShapeMismatchError, UnknownEdgeError
from .topology import LayerLayout

EXCITATORY, INHIBITORY, ABSENT = 0, 1, 2
TYPE_NAMES = ("excitatory", "inhibitory", "absent")
N_TYPES = 3

DEFAULT_W_INH = 1.0


def softmax_probs(logits) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise EmptyOptionsError("softmax over an empty option set")
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("softmax logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ArchParams:
    """Architecture logits for one recurrent layer.

    ``motif_logits`` has one entry per candidate size in ``sizes`` order;
    ``conn_logits[v]`` is ``(E_v, 3)`` in ``TYPE_NAMES`` order. Once
    ``motif_fixed`` is set the size distribution collapses to an exact
    one-hot. ``types_fixed[v]``, when present, pins every edge of size ``v``
    to a hard type choice (used by the fully-connected ablation baseline,
    where architecture parameters are inert).
    """

    sizes: tuple[int, ...]
    motif_logits: np.ndarray
    conn_logits: dict[int, np.ndarray]
    motif_fixed: int | None = None
    types_fixed: dict[int, np.ndarray] = field(default_factory=dict)

    def motif_probs(self) -> np.ndarray:
        if self.motif_fixed is not None:
            p = np.zeros(len(self.sizes))
            p[self.sizes.index(self.motif_fixed)] = 1.0
            return p
        return softmax_probs(self.motif_logits)

    def conn_probs(self, v: int) -> np.ndarray:
        fixed = self.types_fixed.get(v)
        if fixed is not None:
            p = np.zeros((len(fixed), N_TYPES))
            p[np.arange(len(fixed)), fixed] = 1.0
            return p
        return softmax_probs(self.conn_logits[v])

    def copy(self) -> "ArchParams":
        return ArchParams(
            sizes=self.sizes,
            motif_logits=self.motif_logits.copy(),
            conn_logits={v: a.copy() for v, a in self.conn_logits.items()},
            motif_fixed=self.motif_fixed,
            types_fixed={v: a.copy() for v, a in self.types_fixed.items()},
        )


@dataclass
class RecurrentWeights:
    """Trainable excitatory weights per (motif size, edge), plus the fixed
    inhibitory magnitude shared by every inhibitory connection."""

    w_exc: dict[int, np.ndarray]
    w_inh: float = DEFAULT_W_INH

    def copy(self) -> "RecurrentWeights":
        return RecurrentWeights(w_exc={v: a.copy() for v, a in self.w_exc.items()},
                                w_inh=self.w_inh)


def edge_type_weights(w: RecurrentWeights, v: int) -> np.ndarray:
    """Per-edge weight under each type, shape (E_v, 3): [w_exc, -w_inh, 0]."""
    e = len(w.w_exc[v])
    cols = np.empty((e, N_TYPES))
    cols[:, EXCITATORY] = w.w_exc[v]
    cols[:, INHIBITORY] = -w.w_inh
    cols[:, ABSENT] = 0.0
    return cols


def effective_weight_matrix(arch: ArchParams, w: RecurrentWeights,
                            layout: LayerLayout, v: int) -> np.ndarray:
    """Dense (n, n) matrix of type-mixed edge weights for one motif size.

    Entry [i, r] is sum_c p_irc * w_irc for the candidate edge r -> i,
    zero where no candidate exists. The absent type contributes exactly 0.
    """
    probs = arch.conn_probs(v)
    eff = probs[:, EXCITATORY] * w.w_exc[v] + probs[:, INHIBITORY] * (-w.w_inh)
    mat = np.zeros((layout.n, layout.n))
    es = layout.edges[v]
    mat[es.dst, es.src] = eff
    return mat


def mixing_matrices(arch: ArchParams, w: RecurrentWeights,
                    layout: LayerLayout) -> list[tuple[float, np.ndarray]]:
    """(probability, effective matrix) per candidate size, ascending size order."""
    pv = arch.motif_probs()
    return [(float(pv[k]), effective_weight_matrix(arch, w, layout, v))
            for k, v in enumerate(arch.sizes)]


def combined_matrix(arch: ArchParams, w: RecurrentWeights, layout: LayerLayout) -> np.ndarray:
    """Size-mixed effective recurrent matrix sum_v p_v * W_v."""
    out = np.zeros((layout.n, layout.n))
    for p, mat in mixing_matrices(arch, w, layout):
        if p == 0.0:
            continue
        out += p * mat
    return out


def mixed_recurrent_currents(a_prev: np.ndarray, arch: ArchParams, w: RecurrentWeights,
                             layout: LayerLayout) -> np.ndarray:
    """Relaxed recurrent drive for every neuron given last step's PSCs.

    ``a_prev`` has shape ``(..., n)``; the result matches it. Zero-probability
    sizes are skipped so a one-hot selection reduces exactly to the single
    chosen matrix.
    """
    a_prev = np.asarray(a_prev, dtype=np.float64)
    if a_prev.shape[-1] != layout.n:
        raise ShapeMismatchError(
            f"PSC vector has length {a_prev.shape[-1]}, layer has {layout.n} neurons")
    out = np.zeros_like(a_prev)
    for p, mat in mixing_matrices(arch, w, layout):
        if p == 0.0:
            continue
        out += p * (a_prev @ mat.T)
    return out


def mixed_recurrent_current(i: int, a_prev: np.ndarray, arch: ArchParams,
                            w: RecurrentWeights, layout: LayerLayout) -> float:
    """Relaxed recurrent drive into a single neuron."""
    return float(mixed_recurrent_currents(a_prev, arch, w, layout)[..., i])


def effective_edge_weight(edge: tuple[int, int], arch: ArchParams, w: RecurrentWeights,
                          layout: LayerLayout) -> float:
    """Size- and type-mixed weight of one directed pair (dst, src).

    Inspection/export helper: sums p_v * (sum_c p_c w_c) over every candidate
    set the pair appears in. Raises UnknownEdgeError if it appears in none.
    """
    i, r = edge
    pv = arch.motif_probs()
    total = 0.0
    found = False
    for k, v in enumerate(arch.sizes):
        es = layout.edges[v]
        hit = np.flatnonzero((es.dst == i) & (es.src == r))
        if hit.size == 0:
            continue
        found = True
        probs = arch.conn_probs(v)[hit[0]]
        wcols = edge_type_weights(w, v)[hit[0]]
        total += pv[k] * float(probs @ wcols)
    if not found:
        raise UnknownEdgeError(f"edge {edge} is not a candidate under any motif size")
    return total
