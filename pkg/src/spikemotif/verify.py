"""Independent oracles: finite-difference gradient checks and brute-force
current enumeration.

Nothing here reuses the vectorized arithmetic under test. The brute-force
current is a literal triple loop over (motif size, edge, type) with its own
naive softmax; the gradient check perturbs one raw parameter at a time and
reruns the full forward pass. Checks run in soft mode only: the spiking
nonlinearity has no pointwise derivative for a finite difference to
converge to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import grad as gradmod
from . import network as net
from .errors import InvalidSpecError, NonFiniteError, TooLargeError
from .neuron import MODE_SOFT
from .relax import EXCITATORY, INHIBITORY, ArchParams, RecurrentWeights
from .topology import LayerLayout

DEFAULT_EPSILON = 1e-5
DEFAULT_TOLERANCE = 1e-4
ABS_FLOOR = 1e-8
MAX_BRUTE_NEURONS = 32

GROUPS = ("w_ff", "w_exc", "conn_logits", "motif_logits")


def finite_diff(loss_fn, epsilon: float, x: float = 0.0) -> float:
    """Central difference (f(x+eps) - f(x-eps)) / (2 eps)."""
    if epsilon <= 0:
        raise InvalidSpecError("epsilon must be positive")
    d = (loss_fn(x + epsilon) - loss_fn(x - epsilon)) / (2.0 * epsilon)
    if not math.isfinite(d):
        raise NonFiniteError(f"finite difference is not finite: {d}")
    return d


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|) with an absolute floor for near-zero gradients.

    Differences below ABS_FLOOR count as agreement: on coordinates whose true
    gradient is tiny, central differences bottom out at rounding noise around
    1e-10 and a pure ratio would flag noise, not error. A real chain-rule bug
    scales with the gradient and still trips the relative test on the
    large-magnitude coordinates.
    """
    if abs(analytic - numeric) < ABS_FLOOR:
        return 0.0
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric))


@dataclass(frozen=True)
class GroupResult:
    name: str
    checked: int
    max_rel_err: float
    mean_rel_err: float
    max_abs_diff: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


@dataclass(frozen=True)
class GradCheckReport:
    groups: tuple[GroupResult, ...]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    def as_table(self) -> str:
        lines = [f"{'group':<14}{'checked':>8}{'max_rel_err':>14}{'mean_rel_err':>14}"
                 f"{'max_abs_diff':>14}{'pass':>6}"]
        for g in self.groups:
            lines.append(f"{g.name:<14}{g.checked:>8}{g.max_rel_err:>14.3e}"
                         f"{g.mean_rel_err:>14.3e}{g.max_abs_diff:>14.3e}"
                         f"{'yes' if g.passed else 'NO':>6}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        rows = ["group,checked,max_rel_err,mean_rel_err,max_abs_diff,pass"]
        for g in self.groups:
            rows.append(f"{g.name},{g.checked},{g.max_rel_err!r},{g.mean_rel_err!r},"
                        f"{g.max_abs_diff!r},{int(g.passed)}")
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _group_coords(params: net.NetworkParams, group: str) -> list[tuple]:
    coords: list[tuple] = []
    if group == "w_ff":
        for k, w in enumerate(params.w_ff):
            coords.extend(("w_ff", k, None, i) for i in range(w.size))
    elif group == "w_exc":
        for k, w in params.w_rec.items():
            for v, arr in w.w_exc.items():
                coords.extend(("w_exc", k, v, i) for i in range(arr.size))
    elif group == "conn_logits":
        for k, a in params.arch.items():
            for v, arr in a.conn_logits.items():
                coords.extend(("conn_logits", k, v, i) for i in range(arr.size))
    elif group == "motif_logits":
        for k, a in params.arch.items():
            coords.extend(("motif_logits", k, None, i) for i in range(a.motif_logits.size))
    else:
        raise InvalidSpecError(f"unknown parameter group {group!r}")
    return coords


def _nudge(params: net.NetworkParams, coord: tuple, delta: float) -> None:
    group, k, v, i = coord
    if group == "w_ff":
        params.w_ff[k].flat[i] += delta
    elif group == "w_exc":
        params.w_rec[k].w_exc[v].flat[i] += delta
    elif group == "conn_logits":
        params.arch[k].conn_logits[v].flat[i] += delta
    else:
        params.arch[k].motif_logits.flat[i] += delta


def _analytic(gset: gradmod.GradientSet, coord: tuple) -> float:
    group, k, v, i = coord
    if group == "w_ff":
        return float(gset.w_ff[k].flat[i])
    if group == "w_exc":
        return float(gset.w_exc[k][v].flat[i])
    if group == "conn_logits":
        return float(gset.conn_logits[k][v].flat[i])
    return float(gset.motif_logits[k].flat[i])


def gradcheck(config: net.NetworkConfig, params: net.NetworkParams, spikes: np.ndarray,
              labels, tolerance: float = DEFAULT_TOLERANCE, sample_count: int = 50,
              seed: int = 0, epsilon: float = DEFAULT_EPSILON, mode: str = MODE_SOFT,
              layouts: Mapping[int, LayerLayout] | None = None) -> GradCheckReport:
    """Compare analytic gradients against central differences, group by group.

    Coordinates are drawn uniformly with replacement (small groups, such as
    the motif logits, can have fewer distinct entries than sample_count).
    """
    if mode != MODE_SOFT:
        raise InvalidSpecError(
            "gradient checking requires soft mode; the spiking threshold is "
            "not differentiable so finite differences have no target to match")
    if layouts is None:
        layouts = net.build_layouts(config)
    rng = np.random.Generator(np.random.PCG64(seed))
    _, gset, _ = gradmod.loss_and_grads(config, params, spikes, labels,
                                        mode=mode, layouts=layouts)

    def loss_at(coord, delta: float) -> float:
        probe = params.copy()
        _nudge(probe, coord, delta)
        act = net.forward(config, probe, spikes, mode=mode, layouts=layouts)
        return net.loss(act, labels)

    results = []
    for group in GROUPS:
        coords = _group_coords(params, group)
        if not coords:
            results.append(GroupResult(group, 0, 0.0, 0.0, 0.0, tolerance))
            continue
        errs, diffs = [], []
        for j in rng.integers(0, len(coords), size=sample_count):
            coord = coords[int(j)]
            analytic = _analytic(gset, coord)
            numeric = finite_diff(lambda d: loss_at(coord, d), epsilon)
            errs.append(relative_error(analytic, numeric))
            diffs.append(abs(analytic - numeric))
        results.append(GroupResult(group, len(errs), float(np.max(errs)),
                                   float(np.mean(errs)), float(np.max(diffs)),
                                   tolerance))
    return GradCheckReport(groups=tuple(results))


def _naive_softmax(logits) -> list[float]:
    exps = [math.exp(float(x)) for x in logits]
    s = sum(exps)
    return [e / s for e in exps]


def brute_force_current(i: int, t: int, a: np.ndarray, arch: ArchParams,
                        w: RecurrentWeights, layout: LayerLayout) -> float:
    """Naive Eq.-style triple enumeration of the mixed recurrent drive.

    ``a`` is one example's (n, T) PSC history; the drive into neuron ``i``
    at step ``t`` reads a[:, t-1] (zero at t = 0). Loops every (motif size,
    candidate edge, connection type) with scalar arithmetic and a naive
    softmax; no vectorized shortcut shared with the implementation.
    """
    if layout.n > MAX_BRUTE_NEURONS:
        raise TooLargeError(f"brute force capped at {MAX_BRUTE_NEURONS} neurons")
    if t == 0:
        return 0.0
    if arch.motif_fixed is not None:
        motif_probs = [1.0 if v == arch.motif_fixed else 0.0 for v in arch.sizes]
    else:
        motif_probs = _naive_softmax(arch.motif_logits)
    total = 0.0
    for pv, v in zip(motif_probs, arch.sizes):
        es = layout.edges[v]
        fixed = arch.types_fixed.get(v)
        for e in range(len(es)):
            if int(es.dst[e]) != i:
                continue
            if fixed is not None:
                conn_probs = [0.0, 0.0, 0.0]
                conn_probs[int(fixed[e])] = 1.0
            else:
                conn_probs = _naive_softmax(arch.conn_logits[v][e])
            r = int(es.src[e])
            for c, pc in enumerate(conn_probs):
                if c == EXCITATORY:
                    wc = float(w.w_exc[v][e])
                elif c == INHIBITORY:
                    wc = -w.w_inh
                else:
                    wc = 0.0  # absent
                total += pv * pc * wc * float(a[r, t - 1])
    return total
