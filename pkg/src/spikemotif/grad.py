"""Backpropagation through time and gradient-descent steps.

Reverse-time unrolling of the forward dynamics. Two per-neuron adjoint
sequences are maintained, processed at each timestep from the deepest layer
backwards (the readout consumes the last hidden layer's same-step PSC, so
within a timestep deeper deltas must exist first):

    ea_l[t] = dL/da_l[t] = [readout: softmax grad of the time-summed scores]
              + (1 - 1/tau_s) * ea_l[t+1]
              + W_ff[l+1]^T (gain_{l+1} * delta_{l+1}[t])      (same step)
              + M_l^T (gain_l * delta_l[t+1])                  (recurrent, one-step delay)

    delta_l[t] = dL/du_pre_l[t] = psi_l[t] * ea_l[t]
              + leak_l * rho_l[t] * delta_l[t+1]

where gain = R/tau, leak = 1 - 1/tau, M_l is the mixed effective recurrent
matrix, psi is the spike derivative (rectangular surrogate in spiking mode,
exact sigmoid derivative in soft mode) and rho is the reset-path factor:
(1 - s[t]) in spiking mode with the spike indicator detached, 1 in soft mode.
The soft-mode recursion is exact and is validated against central finite
differences; the spiking-mode recursion replaces psi by the surrogate.

Parameter gradients follow by summing delta against the recorded PSC traces
over batch and time; architecture gradients are first taken with respect to
the selection probabilities and then chained through the softmax Jacobian to
the raw logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import network as net
from . import relax
from .errors import NonFiniteGradientError, StaleActivityError
from .neuron import MODE_SPIKING, soft_spike_grad, surrogate_grad
from .topology import LayerLayout


@dataclass(frozen=True)
class OptimState:
    """Learning rates for the two descent targets plus the per-group
    L2 clip bound applied before every step."""

    eta_arch: float
    eta_w: float
    clip: float = 5.0

    def validate(self) -> None:
        # zero is legal (an explicit identity step); negative is not
        if self.eta_arch < 0 or self.eta_w < 0:
            raise ValueError("learning rates must be non-negative")
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")


@dataclass
class BackpropState:
    """Adjoints from one backward pass: delta = dL/du_pre and ea = dL/da,
    one (B, n, T) array per layer, shapes matching the ActivityRecord."""

    delta: list[np.ndarray]
    ea: list[np.ndarray]


@dataclass
class GradientSet:
    """Batch-summed gradients for every trainable parameter array.

    ``conn_probs_grad`` and ``motif_probs_grad`` are the intermediate
    gradients with respect to the selection probabilities (before the
    softmax Jacobian); kept for inspection and tests.
    """

    w_ff: list[np.ndarray]
    w_exc: dict[int, dict[int, np.ndarray]]
    conn_logits: dict[int, dict[int, np.ndarray]]
    motif_logits: dict[int, np.ndarray]
    conn_probs_grad: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)
    motif_probs_grad: dict[int, np.ndarray] = field(default_factory=dict)


def _check_activity(config: net.NetworkConfig, activity: net.ActivityRecord) -> None:
    sizes = [spec.size for spec in config.layers]
    if activity.layer_sizes() != sizes or activity.horizon != config.T:
        raise StaleActivityError(
            f"activity shape (sizes {activity.layer_sizes()}, T={activity.horizon}) "
            f"does not match config (sizes {sizes}, T={config.T})")


def backward(config: net.NetworkConfig, params: net.NetworkParams,
             activity: net.ActivityRecord, labels,
             layouts: Mapping[int, LayerLayout] | None = None) -> BackpropState:
    """Reverse-time adjoint recursion for the batch.

    The spike mode is taken from the activity record so the surrogate choice
    always matches the forward pass that produced it.
    """
    _check_activity(config, activity)
    if layouts is None:
        layouts = net.build_layouts(config)
    L = len(config.layers)
    T = config.T
    gscore = net.loss_grad_scores(activity, labels)

    mixed = {k: relax.combined_matrix(params.arch[k], params.w_rec[k], layouts[k])
             for k in config.recurrent_layers()}
    spiking = activity.mode == MODE_SPIKING
    psi = []
    for k in range(L):
        intr = params.intr[k]
        if spiking:
            psi.append(surrogate_grad(activity.u_pre[k], intr.theta, config.surrogate_width))
        else:
            psi.append(soft_spike_grad(activity.u_pre[k], intr.theta, config.kappa))

    delta = [np.zeros_like(activity.u_pre[k]) for k in range(L)]
    ea = [np.zeros_like(activity.u_pre[k]) for k in range(L)]
    for t in reversed(range(T)):
        for k in reversed(range(L)):
            intr = params.intr[k]
            e = np.zeros_like(ea[k][:, :, t])
            if k == L - 1:
                e += gscore
            if t + 1 < T:
                e += (1.0 - 1.0 / intr.tau_s) * ea[k][:, :, t + 1]
            if k + 1 < L:
                nxt = params.intr[k + 1]
                e += (nxt.gain * delta[k + 1][:, :, t]) @ params.w_ff[k + 1]
            if k in mixed and t + 1 < T:
                e += (intr.gain * delta[k][:, :, t + 1]) @ mixed[k]
            d = psi[k][:, :, t] * e
            if t + 1 < T:
                rho = (1.0 - activity.s[k][:, :, t]) if spiking else 1.0
                d += intr.leak * rho * delta[k][:, :, t + 1]
            ea[k][:, :, t] = e
            delta[k][:, :, t] = d
    return BackpropState(delta=delta, ea=ea)


def grads(config: net.NetworkConfig, params: net.NetworkParams, bp: BackpropState,
          activity: net.ActivityRecord,
          layouts: Mapping[int, LayerLayout] | None = None) -> GradientSet:
    """Contract the adjoints against recorded PSC traces.

    Every entry is summed over t and over the batch. Feedforward pairs with
    the previous layer's same-step PSC; recurrent pairs with the same layer's
    PSC one step back. Absent and inhibitory weights receive no gradient
    (untrained); architecture gradients chain to raw logits, and arrays whose
    choices are fixed (committed motif size, pinned types) come back zero.
    """
    _check_activity(config, activity)
    if layouts is None:
        layouts = net.build_layouts(config)
    L = len(config.layers)
    g_w_ff: list[np.ndarray] = []
    g_w_exc: dict[int, dict[int, np.ndarray]] = {}
    g_conn: dict[int, dict[int, np.ndarray]] = {}
    g_motif: dict[int, np.ndarray] = {}
    ghat_conn_all: dict[int, dict[int, np.ndarray]] = {}
    ghat_motif_all: dict[int, np.ndarray] = {}

    for k in range(L):
        D = params.intr[k].gain[None, :, None] * bp.delta[k]
        a_prev = activity.input_psc if k == 0 else activity.a[k - 1]
        g_w_ff.append(np.einsum("bit,bjt->ij", D, a_prev))
        if k not in params.arch:
            continue
        arch = params.arch[k]
        w = params.w_rec[k]
        layout = layouts[k]
        # kernel[i, r] = sum_b sum_{t>=1} D_i[t] a_r[t-1]
        kernel = np.einsum("bit,brt->ir", D[:, :, 1:], activity.a[k][:, :, :-1])
        pv = arch.motif_probs()
        g_w_exc[k] = {}
        ghat_conn = {}
        ghat_motif = np.zeros(len(arch.sizes))
        for idx, v in enumerate(arch.sizes):
            es = layout.edges[v]
            S = kernel[es.dst, es.src]
            probs = arch.conn_probs(v)
            wcols = relax.edge_type_weights(w, v)
            g_w_exc[k][v] = pv[idx] * probs[:, relax.EXCITATORY] * S
            ghat_conn[v] = pv[idx] * wcols * S[:, None]
            ghat_motif[idx] = float(((probs * wcols).sum(axis=1) * S).sum())
        ghat_conn_all[k] = ghat_conn
        ghat_motif_all[k] = ghat_motif
        # chain d/d(prob) -> d/d(logit): g = p * (ghat - <ghat, p>)
        g_conn[k] = {}
        for v in arch.sizes:
            if v in arch.types_fixed:
                g_conn[k][v] = np.zeros_like(arch.conn_logits[v])
            else:
                p = arch.conn_probs(v)
                gh = ghat_conn[v]
                g_conn[k][v] = p * (gh - (gh * p).sum(axis=1, keepdims=True))
        if arch.motif_fixed is not None:
            g_motif[k] = np.zeros_like(arch.motif_logits)
        else:
            g_motif[k] = pv * (ghat_motif - float(ghat_motif @ pv))
    return GradientSet(w_ff=g_w_ff, w_exc=g_w_exc, conn_logits=g_conn,
                       motif_logits=g_motif, conn_probs_grad=ghat_conn_all,
                       motif_probs_grad=ghat_motif_all)


def loss_and_grads(config: net.NetworkConfig, params: net.NetworkParams,
                   spikes: np.ndarray, labels, mode: str = MODE_SPIKING,
                   layouts: Mapping[int, LayerLayout] | None = None):
    """Forward + backward + contraction in one call.

    Returns (loss value, GradientSet, ActivityRecord).
    """
    activity = net.forward(config, params, spikes, mode=mode, layouts=layouts)
    bp = backward(config, params, activity, labels, layouts=layouts)
    gset = grads(config, params, bp, activity, layouts=layouts)
    return net.loss(activity, labels), gset, activity


def _clipped(g: np.ndarray, bound: float) -> np.ndarray:
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("non-finite gradient entry")
    norm = float(np.linalg.norm(g))
    if norm > bound:
        return g * (bound / norm)
    return g


TARGET_WEIGHTS = "weights"
TARGET_ARCH = "architecture"


def apply_step(params: net.NetworkParams, gset: GradientSet, opt: OptimState,
               target: str) -> net.NetworkParams:
    """One plain gradient-descent step on a copy of the parameters.

    target "weights" touches feedforward and excitatory recurrent weights
    (excitatory entries re-clamped to >= 0 afterwards); target
    "architecture" touches motif and connection-type logits. Each parameter
    array is clipped to the configured L2 norm before stepping.
    """
    opt.validate()
    out = params.copy()
    if target == TARGET_WEIGHTS:
        for k, g in enumerate(gset.w_ff):
            out.w_ff[k] -= opt.eta_w * _clipped(g, opt.clip)
        for k, per_v in gset.w_exc.items():
            for v, g in per_v.items():
                stepped = out.w_rec[k].w_exc[v] - opt.eta_w * _clipped(g, opt.clip)
                out.w_rec[k].w_exc[v] = np.maximum(stepped, 0.0)
    elif target == TARGET_ARCH:
        for k, g in gset.motif_logits.items():
            if out.arch[k].motif_fixed is None:
                out.arch[k].motif_logits -= opt.eta_arch * _clipped(g, opt.clip)
        for k, per_v in gset.conn_logits.items():
            for v, g in per_v.items():
                if v not in out.arch[k].types_fixed:
                    out.arch[k].conn_logits[v] -= opt.eta_arch * _clipped(g, opt.clip)
    else:
        raise ValueError(f"unknown step target {target!r}")
    return out
