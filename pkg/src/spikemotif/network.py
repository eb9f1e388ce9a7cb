"""Multi-layer spiking network assembly and time-stepped simulation.

A network is a stack: input spike trains -> one or more hidden layers (plain
feedforward or recurrent motif layers) -> a feedforward readout whose size is
the class count. Within a timestep, feedforward propagation uses the previous
layer's same-step PSC a_j[t]; recurrent propagation uses the same layer's
one-step-delayed PSC a_r[t-1].

Everything is batch-first: simulation state arrays have shape (B, n, T).
The simulator is sequential in t by construction; batch members evolve
independently and in parallel through vectorized numpy ops.

Classification readout: per-class score z_k = sum_t a_k[t] over the readout
layer's PSCs, softmax cross-entropy against the integer label, summed over
the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import relax
from .errors import InvalidLabelError, InvalidSpecError, ShapeMismatchError
from .neuron import (DEFAULT_KAPPA, DEFAULT_R, DEFAULT_SURROGATE_WIDTH, DEFAULT_TAU,
                     DEFAULT_TAU_S, DEFAULT_THETA, MODE_SOFT, MODE_SPIKING,
                     NeuronIntrinsics, membrane_step, soft_spike)
from .relax import EXCITATORY, ArchParams, RecurrentWeights
from .topology import LayerLayout, build_layout

KIND_FEEDFORWARD = "feedforward"
KIND_RECURRENT = "recurrent"

DEFAULT_W_INIT_SCALE = 0.3


@dataclass(frozen=True)
class LayerSpec:
    """One hidden or readout layer: neuron count, wiring kind, and (for
    recurrent layers) the candidate motif sizes."""

    size: int
    kind: str = KIND_FEEDFORWARD
    motif_sizes: tuple[int, ...] = ()


@dataclass(frozen=True)
class NetworkConfig:
    n_in: int
    layers: tuple[LayerSpec, ...]
    T: int
    theta: float = DEFAULT_THETA
    tau: float = DEFAULT_TAU
    tau_s: float = DEFAULT_TAU_S
    R: float = DEFAULT_R
    kappa: float = DEFAULT_KAPPA
    surrogate_width: float = DEFAULT_SURROGATE_WIDTH
    w_inh: float = relax.DEFAULT_W_INH
    # ablation switches
    no_motif: bool = False
    no_inter_motif: bool = False
    fully_connected_fixed: bool = False
    # None -> 0.3 / sqrt(fan-in); a float overrides both ff and recurrent init
    w_init_b: float | None = None

    def validate(self) -> None:
        if self.T < 1:
            raise InvalidSpecError(f"horizon T must be >= 1, got {self.T}")
        if self.n_in < 1:
            raise InvalidSpecError(f"n_in must be >= 1, got {self.n_in}")
        if not self.layers:
            raise InvalidSpecError("network needs at least a readout layer")
        for k, spec in enumerate(self.layers):
            if spec.size < 1:
                raise InvalidSpecError(f"layer {k} has non-positive size {spec.size}")
            if spec.kind not in (KIND_FEEDFORWARD, KIND_RECURRENT):
                raise InvalidSpecError(f"layer {k} has unknown kind {spec.kind!r}")
            if spec.kind == KIND_RECURRENT and not self.motif_sizes_for(k):
                raise InvalidSpecError(f"recurrent layer {k} needs candidate motif sizes")
        if self.layers[-1].kind != KIND_FEEDFORWARD:
            raise InvalidSpecError("readout layer must be feedforward")
        if self.tau <= 1 or self.tau_s <= 1:
            raise InvalidSpecError("tau and tau_s must be > 1")

    @property
    def n_out(self) -> int:
        return self.layers[-1].size

    @property
    def inter_enabled(self) -> bool:
        return not self.no_inter_motif

    def recurrent_layers(self) -> list[int]:
        return [k for k, s in enumerate(self.layers) if s.kind == KIND_RECURRENT]

    def prev_size(self, k: int) -> int:
        return self.n_in if k == 0 else self.layers[k - 1].size

    def motif_sizes_for(self, k: int) -> tuple[int, ...]:
        """Candidate sizes after ablation rewrites: no_motif and the
        fully-connected baseline collapse the set to one layer-spanning motif."""
        spec = self.layers[k]
        if spec.kind != KIND_RECURRENT:
            return ()
        if self.no_motif or self.fully_connected_fixed:
            return (spec.size,)
        return spec.motif_sizes


def build_layouts(config: NetworkConfig) -> dict[int, LayerLayout]:
    return {k: build_layout(config.layers[k].size, config.motif_sizes_for(k),
                            inter_enabled=config.inter_enabled)
            for k in config.recurrent_layers()}


@dataclass
class NetworkParams:
    """All mutable per-network state: feedforward weights per layer,
    architecture logits and recurrent weights per recurrent layer, and
    per-layer neuron intrinsics (adapted by IP, not by gradient)."""

    w_ff: list[np.ndarray]
    arch: dict[int, ArchParams]
    w_rec: dict[int, RecurrentWeights]
    intr: list[NeuronIntrinsics]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            w_ff=[w.copy() for w in self.w_ff],
            arch={k: a.copy() for k, a in self.arch.items()},
            w_rec={k: w.copy() for k, w in self.w_rec.items()},
            intr=[i.copy() for i in self.intr],
        )


def _init_bound(config: NetworkConfig, fan_in: int) -> float:
    if config.w_init_b is not None:
        return config.w_init_b
    return DEFAULT_W_INIT_SCALE / np.sqrt(fan_in)


def init_params(config: NetworkConfig, rng: np.random.Generator,
                layouts: Mapping[int, LayerLayout] | None = None) -> NetworkParams:
    """Uniform [0, b] weights with b = 0.3/sqrt(fan-in) unless overridden,
    zero logits (uniform architecture prior), default intrinsics."""
    config.validate()
    if layouts is None:
        layouts = build_layouts(config)
    w_ff: list[np.ndarray] = []
    arch: dict[int, ArchParams] = {}
    w_rec: dict[int, RecurrentWeights] = {}
    intr: list[NeuronIntrinsics] = []
    for k, spec in enumerate(config.layers):
        n_prev = config.prev_size(k)
        b = _init_bound(config, n_prev)
        w_ff.append(rng.uniform(0.0, b, size=(spec.size, n_prev)))
        intr.append(NeuronIntrinsics.uniform(spec.size, R=config.R, tau=config.tau,
                                             theta=config.theta, tau_s=config.tau_s))
        if spec.kind != KIND_RECURRENT:
            continue
        layout = layouts[k]
        sizes = layout.sizes
        n_motifs = {v: spec.size // v for v in sizes}
        conn_logits = {v: np.zeros((len(layout.edges[v]), relax.N_TYPES)) for v in sizes}
        w_exc = {}
        for v in sizes:
            fan = v + (2 if config.inter_enabled and n_motifs[v] > 1 else 0)
            w_exc[v] = rng.uniform(0.0, _init_bound(config, fan), size=len(layout.edges[v]))
        a = ArchParams(sizes=sizes, motif_logits=np.zeros(len(sizes)),
                       conn_logits=conn_logits)
        if config.fully_connected_fixed:
            # every pair excitatory and trained; architecture params inert
            a.motif_fixed = sizes[0]
            a.types_fixed = {v: np.full(len(layout.edges[v]), EXCITATORY, dtype=np.int64)
                             for v in sizes}
        arch[k] = a
        w_rec[k] = RecurrentWeights(w_exc=w_exc, w_inh=config.w_inh)
    return NetworkParams(w_ff=w_ff, arch=arch, w_rec=w_rec, intr=intr)


@dataclass
class ActivityRecord:
    """Full simulation trajectory of one batch.

    All arrays are (B, n_layer, T). ``u_pre`` is the membrane value before
    reset (what the spike decision and the surrogate derivative see), ``u``
    the value carried to the next step. In soft mode they coincide.
    """

    mode: str
    input_psc: np.ndarray
    u_pre: list[np.ndarray]
    u: list[np.ndarray]
    s: list[np.ndarray]
    a: list[np.ndarray]

    @property
    def batch(self) -> int:
        return self.input_psc.shape[0]

    @property
    def horizon(self) -> int:
        return self.input_psc.shape[2]

    def layer_sizes(self) -> list[int]:
        return [arr.shape[1] for arr in self.a]


def _check_injection(ext, layer_shapes, what: str) -> None:
    if ext is None:
        return
    for k, arr in ext.items():
        if arr is None:
            continue
        if arr.shape != layer_shapes[k]:
            raise ShapeMismatchError(
                f"{what}[{k}] has shape {arr.shape}, expected {layer_shapes[k]}")


def forward(config: NetworkConfig, params: NetworkParams, spikes: np.ndarray,
            mode: str = MODE_SPIKING,
            layouts: Mapping[int, LayerLayout] | None = None,
            u_ext: Mapping[int, np.ndarray] | None = None,
            a_ext: Mapping[int, np.ndarray] | None = None) -> ActivityRecord:
    """Simulate the whole batch for T steps and record every trajectory.

    ``spikes`` is (B, n_in, T). ``u_ext``/``a_ext`` optionally inject an
    additive perturbation into a layer's membrane (pre-spike) or PSC
    (post-update) at every step; they exist for derivative probing and
    delay tests, not for training.
    """
    if mode not in (MODE_SPIKING, MODE_SOFT):
        raise InvalidSpecError(f"unknown mode {mode!r}")
    spikes = np.asarray(spikes, dtype=np.float64)
    if spikes.ndim != 3 or spikes.shape[1] != config.n_in or spikes.shape[2] != config.T:
        raise ShapeMismatchError(
            f"spikes shape {spikes.shape} does not fit (B, {config.n_in}, {config.T})")
    if layouts is None:
        layouts = build_layouts(config)
    B, _, T = spikes.shape
    L = len(config.layers)
    shapes = [(B, config.layers[k].size, T) for k in range(L)]
    _check_injection(u_ext, shapes, "u_ext")
    _check_injection(a_ext, shapes, "a_ext")

    # architecture and weights are frozen during a pass: premix one dense
    # effective matrix per recurrent layer
    mixed = {k: relax.combined_matrix(params.arch[k], params.w_rec[k], layouts[k])
             for k in config.recurrent_layers()}

    input_psc = np.zeros((B, config.n_in, T))
    u_pre = [np.zeros(sh) for sh in shapes]
    u = [np.zeros(sh) for sh in shapes]
    s = [np.zeros(sh) for sh in shapes]
    a = [np.zeros(sh) for sh in shapes]

    mu_in = 1.0 - 1.0 / config.tau_s
    for t in range(T):
        if t == 0:
            input_psc[:, :, 0] = spikes[:, :, 0]
        else:
            input_psc[:, :, t] = mu_in * input_psc[:, :, t - 1] + spikes[:, :, t]
        prev = input_psc[:, :, t]
        for k in range(L):
            intr = params.intr[k]
            cur = prev @ params.w_ff[k].T
            if k in mixed and t > 0:
                cur += a[k][:, :, t - 1] @ mixed[k].T
            up = membrane_step(u[k][:, :, t - 1] if t > 0 else 0.0, cur, intr.R, intr.tau)
            if u_ext is not None and u_ext.get(k) is not None:
                up = up + u_ext[k][:, :, t]
            if mode == MODE_SPIKING:
                st = (up >= intr.theta).astype(np.float64)
                upost = up * (1.0 - st)
            else:
                st = soft_spike(up, intr.theta, config.kappa)
                upost = up
            at = (1.0 - 1.0 / intr.tau_s) * (a[k][:, :, t - 1] if t > 0 else 0.0) + st
            if a_ext is not None and a_ext.get(k) is not None:
                at = at + a_ext[k][:, :, t]
            u_pre[k][:, :, t] = up
            u[k][:, :, t] = upost
            s[k][:, :, t] = st
            a[k][:, :, t] = at
            prev = at
    return ActivityRecord(mode=mode, input_psc=input_psc, u_pre=u_pre, u=u, s=s, a=a)


def simulate_dense(config: NetworkConfig, w_ff: Sequence[np.ndarray],
                   w_rec_dense: Mapping[int, np.ndarray],
                   intr: Sequence[NeuronIntrinsics], spikes: np.ndarray,
                   mode: str = MODE_SPIKING) -> ActivityRecord:
    """Plain dense-matrix simulation: same neuron model, no relaxation.

    Recurrent layers use an explicit (n, n) weight matrix. This is the
    independent route used to check that a one-hot relaxed network and its
    committed discrete architecture produce identical activity; it shares
    the neuron primitives but none of the mixing code.
    """
    spikes = np.asarray(spikes, dtype=np.float64)
    if spikes.ndim != 3 or spikes.shape[1] != config.n_in or spikes.shape[2] != config.T:
        raise ShapeMismatchError(
            f"spikes shape {spikes.shape} does not fit (B, {config.n_in}, {config.T})")
    B, _, T = spikes.shape
    L = len(config.layers)
    shapes = [(B, config.layers[k].size, T) for k in range(L)]
    input_psc = np.zeros((B, config.n_in, T))
    u_pre = [np.zeros(sh) for sh in shapes]
    u = [np.zeros(sh) for sh in shapes]
    s = [np.zeros(sh) for sh in shapes]
    a = [np.zeros(sh) for sh in shapes]
    mu_in = 1.0 - 1.0 / config.tau_s
    for t in range(T):
        if t == 0:
            input_psc[:, :, 0] = spikes[:, :, 0]
        else:
            input_psc[:, :, t] = mu_in * input_psc[:, :, t - 1] + spikes[:, :, t]
        prev = input_psc[:, :, t]
        for k in range(L):
            nintr = intr[k]
            cur = prev @ w_ff[k].T
            if k in w_rec_dense and t > 0:
                cur = cur + a[k][:, :, t - 1] @ w_rec_dense[k].T
            up = membrane_step(u[k][:, :, t - 1] if t > 0 else 0.0, cur, nintr.R, nintr.tau)
            if mode == MODE_SPIKING:
                st = (up >= nintr.theta).astype(np.float64)
                upost = up * (1.0 - st)
            else:
                st = soft_spike(up, nintr.theta, config.kappa)
                upost = up
            at = (1.0 - 1.0 / nintr.tau_s) * (a[k][:, :, t - 1] if t > 0 else 0.0) + st
            u_pre[k][:, :, t] = up
            u[k][:, :, t] = upost
            s[k][:, :, t] = st
            a[k][:, :, t] = at
            prev = at
    return ActivityRecord(mode=mode, input_psc=input_psc, u_pre=u_pre, u=u, s=s, a=a)


def readout_scores(activity: ActivityRecord) -> np.ndarray:
    """(B, C) time-summed readout PSCs."""
    return activity.a[-1].sum(axis=2)


def _check_labels(labels, batch: int, n_classes: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(labels))
    if y.shape != (batch,):
        raise InvalidLabelError(f"expected {batch} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidLabelError(f"labels must be integers, got dtype {y.dtype}")
    if y.min() < 0 or y.max() >= n_classes:
        raise InvalidLabelError(f"labels must lie in [0, {n_classes}), got {y}")
    return y


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(activity: ActivityRecord, labels) -> float:
    """Softmax cross-entropy on time-summed readout PSCs, summed over batch."""
    z = readout_scores(activity)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    logp = _log_softmax(z)
    return float(-logp[np.arange(len(y)), y].sum())


def loss_grad_scores(activity: ActivityRecord, labels) -> np.ndarray:
    """dL/dz for the batch-summed cross-entropy: softmax(z) - onehot(y)."""
    z = readout_scores(activity)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    p = np.exp(_log_softmax(z))
    p[np.arange(len(y)), y] -= 1.0
    return p


def accuracy(activity: ActivityRecord, labels) -> float:
    z = readout_scores(activity)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    return float(np.mean(np.argmax(z, axis=1) == y))
