"""Alternating bilevel architecture search, discretization, and retraining.

Each search iteration runs three steps in order:

1. architecture step: virtual weights w' = w - eta_w * grad_w L(train) are
   formed, the validation loss is replayed at (logits, w'), and the logits
   descend the resulting architecture gradient (first-order: the dependence
   of w' on the logits is not differentiated through);
2. weight step: w descends grad_w L(train) evaluated at the just-updated
   logits;
3. rate step: a fresh spiking pass estimates per-neuron firing rates and,
   unless disabled, the homeostatic rule adapts each recurrent neuron's
   R and tau.

The schedule has two phases. Initially every architecture parameter is
free; at the switch point the motif size is committed to its argmax, the
other sizes' candidate edges are pruned, and only connection types keep
training. Discretization then takes the per-edge argmax type, and the final
network is retrained from reinitialized weights with gradients on weights
only and intrinsics frozen.

Every gradient evaluation is recorded in an audit trail (purpose, data
split, example ids) so a run can prove that architecture gradients consumed
only validation batches and weight gradients only training batches.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import grad as gradmod
from . import ip as ipmod
from . import network as net
from . import relax
from .data import SpikeDataset
from .errors import DisjointnessViolationError, InvalidSpecError
from .neuron import MODE_SPIKING, NeuronIntrinsics
from .topology import LayerLayout

log = logging.getLogger(__name__)

PHASE_ALL = "all-params"
PHASE_MOTIF_FIXED = "motif-fixed"

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Batch:
    """A slice of one data split, tagged with its provenance: the split name
    and the parent-dataset ids of its examples."""

    spikes: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    split: str

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class AuditEvent:
    iteration: int
    purpose: str  # "weight_grad" | "arch_grad" | "ip_rates"
    split: str
    ids: tuple[int, ...]


@dataclass
class SearchState:
    config: net.NetworkConfig
    params: net.NetworkParams
    layouts: dict[int, LayerLayout]
    phase: str = PHASE_ALL
    iteration: int = 0
    mode: str = MODE_SPIKING
    use_ip: bool = True
    history: list[dict] = field(default_factory=list)
    audit: list[AuditEvent] = field(default_factory=list)
    # wall-clock seconds per iteration; kept out of history so the metrics
    # CSV stays bit-reproducible across runs of the same seed
    timings: list[float] = field(default_factory=list)

    def record(self, purpose: str, batch: Batch) -> None:
        self.audit.append(AuditEvent(iteration=self.iteration, purpose=purpose,
                                     split=batch.split, ids=tuple(int(i) for i in batch.ids)))


def make_batch(ds: SpikeDataset, ids: np.ndarray, members: Sequence[int], split: str) -> Batch:
    """Materialize examples ``members`` (positions within ds) as one batch."""
    members = np.asarray(list(members), dtype=np.int64)
    return Batch(spikes=ds.rasters(members), labels=ds.labels()[members],
                 ids=np.asarray(ids, dtype=np.int64)[members], split=split)


def batch_stream(ds: SpikeDataset, ids: np.ndarray, batch_size: int, split: str,
                 rng: np.random.Generator) -> Iterator[Batch]:
    """Endless shuffled batches; the order reshuffles every epoch."""
    n = len(ds)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            members = order[start:start + batch_size]
            if len(members) == 0:
                continue
            yield make_batch(ds, ids, members, split)


def _check_disjoint(train_batch: Batch, valid_batch: Batch) -> None:
    overlap = set(map(int, train_batch.ids)) & set(map(int, valid_batch.ids))
    if overlap:
        raise DisjointnessViolationError(
            f"train and validation batches share example ids {sorted(overlap)[:8]}")


def mean_rate(activity: net.ActivityRecord, layers: Sequence[int]) -> float:
    """Mean spikes per neuron per timestep over the given layers."""
    total = sum(float(activity.s[k].mean()) for k in layers)
    return total / max(len(layers), 1)


def hrmas_iteration(state: SearchState, train_batch: Batch, valid_batch: Batch,
                    ip_cfg: ipmod.IPConfig, opt: gradmod.OptimState) -> SearchState:
    """One full alternating iteration; mutates and returns the state."""
    tick = time.perf_counter()
    _check_disjoint(train_batch, valid_batch)
    cfg, layouts = state.config, state.layouts

    # step 1: architecture update from the validation loss at virtual weights
    train_loss, g_train, _ = gradmod.loss_and_grads(
        cfg, state.params, train_batch.spikes, train_batch.labels,
        mode=state.mode, layouts=layouts)
    state.record("weight_grad", train_batch)
    virtual = gradmod.apply_step(state.params, g_train, opt, gradmod.TARGET_WEIGHTS)
    valid_loss, g_valid, _ = gradmod.loss_and_grads(
        cfg, virtual, valid_batch.spikes, valid_batch.labels,
        mode=state.mode, layouts=layouts)
    state.record("arch_grad", valid_batch)
    state.params = gradmod.apply_step(state.params, g_valid, opt, gradmod.TARGET_ARCH)

    # step 2: weight update at the new architecture (gradient recomputed)
    _, g_train2, _ = gradmod.loss_and_grads(
        cfg, state.params, train_batch.spikes, train_batch.labels,
        mode=state.mode, layouts=layouts)
    state.record("weight_grad", train_batch)
    state.params = gradmod.apply_step(state.params, g_train2, opt, gradmod.TARGET_WEIGHTS)

    # step 3: rate estimation (always, for metrics) and homeostatic update
    rate_act = net.forward(cfg, state.params, train_batch.spikes,
                           mode=MODE_SPIKING, layouts=layouts)
    state.record("ip_rates", train_batch)
    rec_layers = cfg.recurrent_layers()
    if state.use_ip:
        for k in rec_layers:
            rates = ipmod.estimate_rate(rate_act, state.params.intr[k], k,
                                        smoothing=ip_cfg.smoothing)
            state.params.intr[k] = ipmod.ip_step(rates, state.params.intr[k], ip_cfg)

    row = {"iteration": state.iteration, "phase": state.phase,
           "train_loss": train_loss, "valid_loss": valid_loss,
           "mean_rate": mean_rate(rate_act, rec_layers)}
    for k in rec_layers:
        arch = state.params.arch[k]
        probs = arch.motif_probs()
        for idx, v in enumerate(arch.sizes):
            row[f"alpha_l{k}_v{v}"] = float(probs[idx])
    state.history.append(row)
    state.timings.append(time.perf_counter() - tick)
    state.iteration += 1
    return state


def fix_motif_size(state: SearchState) -> SearchState:
    """Commit each recurrent layer's motif size to its argmax probability.

    Ties take the smallest size (candidate sizes are stored ascending, and
    the first maximum wins); a tie event is logged. Candidate edges of the
    discarded sizes are pruned from the layouts and the parameters.
    """
    if state.phase != PHASE_ALL:
        raise InvalidSpecError(f"phase must be {PHASE_ALL!r} to fix the motif size")
    for k in state.config.recurrent_layers():
        arch = state.params.arch[k]
        probs = arch.motif_probs()
        best = int(np.argmax(probs))
        if np.sum(probs == probs[best]) > 1:
            log.info("fix_motif_size: tie on layer %d probabilities %s, "
                     "taking smallest size %d", k, probs, arch.sizes[best])
        v_star = arch.sizes[best]
        state.layouts[k] = state.layouts[k].restrict(v_star)
        state.params.arch[k] = relax.ArchParams(
            sizes=(v_star,),
            motif_logits=arch.motif_logits[best:best + 1].copy(),
            conn_logits={v_star: arch.conn_logits[v_star].copy()},
            motif_fixed=v_star,
            types_fixed={v_star: arch.types_fixed[v_star].copy()}
            if v_star in arch.types_fixed else {},
        )
        state.params.w_rec[k] = relax.RecurrentWeights(
            w_exc={v_star: state.params.w_rec[k].w_exc[v_star].copy()},
            w_inh=state.params.w_rec[k].w_inh)
        log.info("fix_motif_size: layer %d committed to motif size %d", k, v_star)
    state.phase = PHASE_MOTIF_FIXED
    return state


@dataclass
class DiscreteArchitecture:
    """Committed architecture of one recurrent layer: the chosen motif size,
    a hard type per candidate edge, the (restricted) layout it refers to,
    and optionally the weights at extraction time."""

    motif_size: int
    types: np.ndarray
    layout: LayerLayout
    w_inh: float
    w_exc: np.ndarray | None = None

    def dense_matrix(self) -> np.ndarray:
        """(n, n) recurrent weight matrix; absent edges stay zero."""
        if self.w_exc is None:
            raise InvalidSpecError("no retained weights to build a matrix from")
        es = self.layout.edges[self.motif_size]
        mat = np.zeros((self.layout.n, self.layout.n))
        exc = self.types == relax.EXCITATORY
        inh = self.types == relax.INHIBITORY
        mat[es.dst[exc], es.src[exc]] = self.w_exc[exc]
        mat[es.dst[inh], es.src[inh]] = -self.w_inh
        return mat

    def kept_edges(self) -> np.ndarray:
        return np.flatnonzero(self.types != relax.ABSENT)


def discretize(state: SearchState) -> dict[int, DiscreteArchitecture]:
    """Per-edge argmax over connection types for every recurrent layer.

    Tie order is excitatory > inhibitory > absent: types are stored in that
    column order and the first maximum wins. Ties are detected and logged.
    """
    if state.phase != PHASE_MOTIF_FIXED:
        raise InvalidSpecError(f"phase must be {PHASE_MOTIF_FIXED!r} to discretize")
    out = {}
    for k in state.config.recurrent_layers():
        arch = state.params.arch[k]
        v_star = arch.motif_fixed
        probs = arch.conn_probs(v_star)
        types = np.argmax(probs, axis=1)
        tied = np.flatnonzero(np.sum(probs == probs.max(axis=1, keepdims=True), axis=1) > 1)
        if tied.size:
            log.info("discretize: layer %d has %d tied edge(s) %s, broken by "
                     "type order excitatory > inhibitory > absent",
                     k, tied.size, tied[:8])
        out[k] = DiscreteArchitecture(
            motif_size=int(v_star), types=types.astype(np.int64),
            layout=state.layouts[k], w_inh=state.params.w_rec[k].w_inh,
            w_exc=state.params.w_rec[k].w_exc[v_star].copy())
    return out


def params_from_discrete(config: net.NetworkConfig,
                         discrete: Mapping[int, DiscreteArchitecture],
                         rng: np.random.Generator,
                         intr: Sequence[NeuronIntrinsics] | None = None,
                         retain_weights: bool = False) -> tuple[net.NetworkParams, dict[int, LayerLayout]]:
    """Network parameters that pin every architecture choice of ``discrete``.

    The selection probabilities become exact one-hots (committed motif size,
    pinned per-edge types) so the relaxed simulator runs the discrete
    network. Weights are freshly initialized unless ``retain_weights``;
    intrinsics default unless a converged set is supplied.
    """
    layouts = {k: d.layout for k, d in discrete.items()}
    params = net.init_params(config, rng, layouts=layouts)
    for k, d in discrete.items():
        v = d.motif_size
        params.arch[k] = relax.ArchParams(
            sizes=(v,), motif_logits=np.zeros(1),
            conn_logits={v: np.zeros((len(d.types), relax.N_TYPES))},
            motif_fixed=v, types_fixed={v: d.types.copy()})
        if retain_weights:
            if d.w_exc is None:
                raise InvalidSpecError("discrete architecture retained no weights")
            params.w_rec[k] = relax.RecurrentWeights(w_exc={v: d.w_exc.copy()},
                                                     w_inh=d.w_inh)
        else:
            params.w_rec[k] = relax.RecurrentWeights(
                w_exc={v: params.w_rec[k].w_exc[v]}, w_inh=d.w_inh)
    if intr is not None:
        params.intr = [x.copy() for x in intr]
    return params, layouts


def random_discrete(config: net.NetworkConfig, rng: np.random.Generator) -> dict[int, DiscreteArchitecture]:
    """Uniform random baseline: random motif size, uniform random type per
    edge, weights left to the retraining initializer."""
    out = {}
    full_layouts = net.build_layouts(config)
    for k in config.recurrent_layers():
        layout = full_layouts[k]
        v = int(rng.choice(layout.sizes))
        restricted = layout.restrict(v)
        types = rng.integers(0, relax.N_TYPES, size=len(restricted.edges[v]))
        out[k] = DiscreteArchitecture(motif_size=v, types=types.astype(np.int64),
                                      layout=restricted, w_inh=config.w_inh)
    return out


def evaluate(config: net.NetworkConfig, params: net.NetworkParams, ds: SpikeDataset,
             layouts: Mapping[int, LayerLayout], mode: str = MODE_SPIKING,
             batch_size: int = 128) -> tuple[float, float]:
    """(mean loss per example, accuracy) over a whole dataset."""
    total_loss = 0.0
    hits = 0
    labels = ds.labels()
    for start in range(0, len(ds), batch_size):
        members = range(start, min(start + batch_size, len(ds)))
        spikes = ds.rasters(members)
        act = net.forward(config, params, spikes, mode=mode, layouts=layouts)
        y = labels[list(members)]
        total_loss += net.loss(act, y)
        hits += int(round(net.accuracy(act, y) * len(y)))
    return total_loss / len(ds), hits / len(ds)


@dataclass(frozen=True)
class SearchSchedule:
    iterations: int
    switch_frac: float = 0.5
    batch_size: int = 32
    patience: int | None = None
    use_ip: bool = True
    mode: str = MODE_SPIKING

    def switch_iteration(self) -> int:
        return int(round(self.iterations * self.switch_frac))

    def validate(self) -> None:
        if self.iterations < 1 or self.batch_size < 1:
            raise InvalidSpecError("iterations and batch_size must be positive")
        if not 0.0 <= self.switch_frac <= 1.0:
            raise InvalidSpecError("switch_frac must lie in [0, 1]")


def run_search(config: net.NetworkConfig, train_ds: SpikeDataset, valid_ds: SpikeDataset,
               opt: gradmod.OptimState, ip_cfg: ipmod.IPConfig, sched: SearchSchedule,
               seed: int, train_ids: np.ndarray | None = None,
               valid_ids: np.ndarray | None = None) -> SearchState:
    """Drive the full two-phase search loop for a fixed iteration budget.

    ``train_ids``/``valid_ids`` are parent-dataset example ids used for the
    audit trail; when the datasets come from data.split_indices, pass those
    indices so disjointness reflects true provenance. Early stop (optional):
    no validation-loss improvement for ``patience`` iterations.
    """
    sched.validate()
    config.validate()
    if train_ids is None:
        train_ids = np.arange(len(train_ds), dtype=np.int64)
    if valid_ids is None:
        valid_ids = len(train_ds) + np.arange(len(valid_ds), dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(seed))
    layouts = net.build_layouts(config)
    params = net.init_params(config, rng, layouts=layouts)
    state = SearchState(config=config, params=params, layouts=layouts,
                        mode=sched.mode, use_ip=sched.use_ip)
    train_iter = batch_stream(train_ds, train_ids, sched.batch_size, "train", rng)
    valid_iter = batch_stream(valid_ds, valid_ids, sched.batch_size, "valid", rng)
    switch_at = sched.switch_iteration()
    best_valid = np.inf
    stale = 0
    for it in range(sched.iterations):
        if it == switch_at and state.phase == PHASE_ALL:
            fix_motif_size(state)
        hrmas_iteration(state, next(train_iter), next(valid_iter), ip_cfg, opt)
        if sched.patience is not None:
            valid_loss = state.history[-1]["valid_loss"]
            if valid_loss < best_valid - 1e-9:
                best_valid = valid_loss
                stale = 0
            else:
                stale += 1
                if stale > sched.patience and state.phase == PHASE_MOTIF_FIXED:
                    log.info("run_search: validation plateau after %d iterations", it + 1)
                    break
    if state.phase == PHASE_ALL:
        fix_motif_size(state)
    return state


@dataclass
class RetrainResult:
    accuracies: np.ndarray
    losses: np.ndarray
    best_params: net.NetworkParams
    best_layouts: dict[int, LayerLayout]

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.accuracies.std())

    @property
    def best(self) -> float:
        return float(self.accuracies.max())


def train_weights(config: net.NetworkConfig, params: net.NetworkParams,
                  layouts: Mapping[int, LayerLayout], train_ds: SpikeDataset,
                  opt: gradmod.OptimState, epochs: int, batch_size: int,
                  rng: np.random.Generator, mode: str = MODE_SPIKING) -> net.NetworkParams:
    """Plain epoch loop of weight-only gradient steps (no architecture
    updates, intrinsics untouched)."""
    labels = train_ds.labels()
    n = len(train_ds)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            members = order[start:start + batch_size]
            spikes = train_ds.rasters(members)
            _, gset, _ = gradmod.loss_and_grads(config, params, spikes,
                                                labels[members], mode=mode,
                                                layouts=layouts)
            params = gradmod.apply_step(params, gset, opt, gradmod.TARGET_WEIGHTS)
    return params


def retrain(config: net.NetworkConfig, discrete: Mapping[int, DiscreteArchitecture],
            train_ds: SpikeDataset, test_ds: SpikeDataset, opt: gradmod.OptimState,
            seeds: Sequence[int], epochs: int, batch_size: int,
            intr: Sequence[NeuronIntrinsics] | None = None,
            mode: str = MODE_SPIKING) -> RetrainResult:
    """Reinitialize weights and train the committed architecture per seed.

    Gradients touch weights only; intrinsics stay frozen (pass the searched
    ones to keep converged values). Reports accuracy per seed on the held-out
    set, mirroring a mean/std/best summary.
    """
    accs = []
    losses = []
    best: tuple[float, net.NetworkParams | None, dict | None] = (-1.0, None, None)
    for seed in seeds:
        rng = np.random.Generator(np.random.PCG64(seed))
        params, layouts = params_from_discrete(config, discrete, rng, intr=intr)
        params = train_weights(config, params, layouts, train_ds, opt, epochs,
                               batch_size, rng, mode=mode)
        test_loss, acc = evaluate(config, params, test_ds, layouts, mode=mode)
        accs.append(acc)
        losses.append(test_loss)
        if acc > best[0]:
            best = (acc, params, layouts)
    return RetrainResult(accuracies=np.array(accs), losses=np.array(losses),
                         best_params=best[1], best_layouts=best[2])


def _params_payload(params: net.NetworkParams) -> dict:
    return {
        "w_ff": [w.tolist() for w in params.w_ff],
        "arch": {str(k): {
            "sizes": list(a.sizes),
            "motif_logits": a.motif_logits.tolist(),
            "conn_logits": {str(v): c.tolist() for v, c in a.conn_logits.items()},
            "motif_fixed": a.motif_fixed,
            "types_fixed": {str(v): t.tolist() for v, t in a.types_fixed.items()},
        } for k, a in params.arch.items()},
        "w_rec": {str(k): {"w_inh": w.w_inh,
                           "w_exc": {str(v): x.tolist() for v, x in w.w_exc.items()}}
                  for k, w in params.w_rec.items()},
        "intr": [{"R": i.R.tolist(), "tau": i.tau.tolist(),
                  "theta": i.theta, "tau_s": i.tau_s} for i in params.intr],
    }


def assert_separation(state: SearchState) -> None:
    """Verify the bilevel data contract from the audit trail.

    Architecture gradients must have consumed only validation batches,
    weight gradients only training batches, and the two id pools must be
    disjoint. Raises DisjointnessViolationError otherwise.
    """
    train_ids: set[int] = set()
    valid_ids: set[int] = set()
    for ev in state.audit:
        if ev.purpose == "arch_grad":
            if ev.split != "valid":
                raise DisjointnessViolationError(
                    f"iteration {ev.iteration}: architecture gradient consumed "
                    f"a {ev.split!r} batch")
            valid_ids.update(ev.ids)
        elif ev.purpose == "weight_grad":
            if ev.split != "train":
                raise DisjointnessViolationError(
                    f"iteration {ev.iteration}: weight gradient consumed "
                    f"a {ev.split!r} batch")
            train_ids.update(ev.ids)
    shared = train_ids & valid_ids
    if shared:
        raise DisjointnessViolationError(
            f"weight and architecture gradients saw overlapping example ids "
            f"{sorted(shared)[:8]}")


def save_checkpoint(state: SearchState, path) -> None:
    """Atomic (write-then-rename) JSON checkpoint of the search state."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "phase": state.phase,
        "iteration": state.iteration,
        "mode": state.mode,
        "use_ip": state.use_ip,
        "params": _params_payload(state.params),
        "history": state.history,
    }
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _params_from_payload(payload: dict, config: net.NetworkConfig) -> tuple[net.NetworkParams, dict[int, LayerLayout]]:
    layouts = net.build_layouts(config)
    arch = {}
    for key, a in payload["arch"].items():
        k = int(key)
        motif_fixed = a["motif_fixed"]
        if motif_fixed is not None and tuple(a["sizes"]) != layouts[k].sizes:
            layouts[k] = layouts[k].restrict(int(motif_fixed))
        arch[k] = relax.ArchParams(
            sizes=tuple(int(v) for v in a["sizes"]),
            motif_logits=np.array(a["motif_logits"], dtype=np.float64),
            conn_logits={int(v): np.array(c, dtype=np.float64)
                         for v, c in a["conn_logits"].items()},
            motif_fixed=None if motif_fixed is None else int(motif_fixed),
            types_fixed={int(v): np.array(t, dtype=np.int64)
                         for v, t in a["types_fixed"].items()})
    w_rec = {int(k): relax.RecurrentWeights(
                 w_exc={int(v): np.array(x, dtype=np.float64)
                        for v, x in w["w_exc"].items()},
                 w_inh=float(w["w_inh"]))
             for k, w in payload["w_rec"].items()}
    intr = [NeuronIntrinsics(R=np.array(i["R"], dtype=np.float64),
                             tau=np.array(i["tau"], dtype=np.float64),
                             theta=float(i["theta"]), tau_s=float(i["tau_s"]))
            for i in payload["intr"]]
    params = net.NetworkParams(
        w_ff=[np.array(w, dtype=np.float64) for w in payload["w_ff"]],
        arch=arch, w_rec=w_rec, intr=intr)
    return params, layouts


def load_checkpoint(path, config: net.NetworkConfig) -> SearchState:
    """Rebuild a SearchState from a checkpoint written by save_checkpoint."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise InvalidSpecError(f"unsupported checkpoint format_version {version!r}")
    params, layouts = _params_from_payload(payload["params"], config)
    return SearchState(config=config, params=params, layouts=layouts,
                       phase=payload["phase"], iteration=int(payload["iteration"]),
                       mode=payload["mode"], use_ip=bool(payload["use_ip"]),
                       history=list(payload["history"]))
