"""Run configuration: INI file + command-line overrides -> validated objects.

One file describes a whole run. Sections and keys:

    [network]  layers, T, theta, tau, tau_s, R, kappa, surrogate_width,
               w_inh, w_init_b ('auto' for 0.3/sqrt(fan-in))
    [optim]    eta_arch, eta_w, clip
    [ip]       mu, eta_ip, window, r_min, r_max, tau_min, tau_max,
               smoothing, max_rel_step
    [search]   iterations, switch_frac, batch_size, patience (empty = off),
               epochs, retrain_seeds
    [data]     classes, input_size, jitter, drop_prob, n_per_class,
               ratios (three comma-separated), data_seed (empty = run seed),
               file (optional event file instead of synthetic)
    [run]      seed, out, workers, mode (spiking|soft), ablation
               (none|no_ip|no_motif|no_inter_motif|fully_connected),
               eval_split (train|valid|test)

The layers value is space-separated layer specs, each
``feedforward:<size>`` or ``recurrent:<size>:<v1,v2,...>``, e.g.
``recurrent:16:2,4,8 feedforward:4``. Overrides are repeatable
``section.key=value`` strings. Validation failures name the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InvalidSpecError
from .grad import OptimState
from .ip import IPConfig
from .network import KIND_FEEDFORWARD, KIND_RECURRENT, LayerSpec, NetworkConfig
from .neuron import MODE_SOFT, MODE_SPIKING
from .search import SearchSchedule
from .topology import build_layout

ABLATIONS = ("none", "no_ip", "no_motif", "no_inter_motif", "fully_connected")

DEFAULTS: dict[str, dict[str, str]] = {
    "network": {
        "layers": "recurrent:16:2,4,8 feedforward:4",
        "T": "50",
        "theta": "1.0",
        "tau": "4.0",
        "tau_s": "2.0",
        "R": "1.0",
        "kappa": "0.2",
        "surrogate_width": "1.0",
        "w_inh": "1.0",
        "w_init_b": "1.0",
    },
    "optim": {"eta_arch": "1.0", "eta_w": "0.1", "clip": "5.0"},
    "ip": {
        "mu": "0.2", "eta_ip": "0.05", "window": "1",
        "r_min": "0.1", "r_max": "10.0", "tau_min": "2.0", "tau_max": "32.0",
        "smoothing": "10.0", "max_rel_step": "0.1",
    },
    "search": {
        "iterations": "300", "switch_frac": "0.5", "batch_size": "32",
        "patience": "", "epochs": "60", "retrain_seeds": "5",
    },
    "data": {
        "classes": "4", "input_size": "16", "jitter": "1.0",
        "drop_prob": "0.05", "n_per_class": "200",
        "ratios": "0.6,0.2,0.2", "data_seed": "", "file": "",
    },
    "run": {
        "seed": "7", "out": "runs/out", "workers": "1",
        "mode": MODE_SPIKING, "ablation": "none", "eval_split": "test",
    },
}


@dataclass
class RunConfig:
    network: NetworkConfig
    opt: OptimState
    ip: IPConfig
    sched: SearchSchedule
    classes: int
    input_size: int
    jitter: float
    drop_prob: float
    n_per_class: int
    ratios: tuple[float, float, float]
    data_seed: int | None
    data_file: str | None
    seed: int
    out: str
    workers: int
    mode: str
    ablation: str
    eval_split: str
    epochs: int
    retrain_seeds: int
    raw: dict[str, dict[str, str]] = field(default_factory=dict)

    def manifest(self) -> dict:
        from . import __version__
        return {"version": __version__, "seed": self.seed, "config": self.raw}


def parse_layers(text: str, key: str = "network.layers") -> tuple[LayerSpec, ...]:
    specs = []
    for token in text.split():
        parts = token.split(":")
        try:
            if parts[0] == KIND_FEEDFORWARD and len(parts) == 2:
                specs.append(LayerSpec(size=int(parts[1]), kind=KIND_FEEDFORWARD))
            elif parts[0] == KIND_RECURRENT and len(parts) == 3:
                sizes = tuple(int(v) for v in parts[2].split(","))
                specs.append(LayerSpec(size=int(parts[1]), kind=KIND_RECURRENT,
                                       motif_sizes=sizes))
            else:
                raise ValueError(f"bad layer token {token!r}")
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if not specs:
        raise ConfigError(f"{key}: at least one layer required")
    return tuple(specs)


def _merge(overrides) -> dict[str, dict[str, str]]:
    merged = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key {key!r} is not of the form section.key")
        sec, name = key.split(".", 1)
        if sec not in merged or name not in merged[sec]:
            raise ConfigError(f"unknown config key {key!r}")
        merged[sec][name] = value
    return merged


def _read_file(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (network.T)
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file: {exc}") from None
    out: dict[str, dict[str, str]] = {}
    for sec in parser.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown config section [{sec}]")
        out[sec] = {}
        for name, value in parser.items(sec):
            if name not in DEFAULTS[sec]:
                raise ConfigError(f"unknown config key {sec}.{name}")
            out[sec][name] = value
    return out


def _typed(raw: dict[str, dict[str, str]], sec: str, name: str, conv, what: str):
    value = raw[sec][name]
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"{sec}.{name}: expected {what}, got {value!r}") from None


def load_config(path=None, overrides=None, seed: int | None = None,
                out: str | None = None, workers: int | None = None) -> RunConfig:
    """Defaults <- config file <- --set overrides <- dedicated flags."""
    raw = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    if path is not None:
        for sec, keys in _read_file(path).items():
            raw[sec].update(keys)
    for sec, keys in _merge(overrides).items():
        for name, value in keys.items():
            if value != DEFAULTS[sec][name]:
                raw[sec][name] = value
    if seed is not None:
        raw["run"]["seed"] = str(seed)
    if out is not None:
        raw["run"]["out"] = out
    if workers is not None:
        raw["run"]["workers"] = str(workers)
    return build_run_config(raw)


def build_run_config(raw: dict[str, dict[str, str]]) -> RunConfig:
    fget = lambda s, n: _typed(raw, s, n, float, "a number")
    iget = lambda s, n: _typed(raw, s, n, int, "an integer")

    w_init_raw = raw["network"]["w_init_b"].strip().lower()
    w_init_b = None if w_init_raw in ("", "auto") else fget("network", "w_init_b")
    network = NetworkConfig(
        n_in=iget("data", "input_size"),
        layers=parse_layers(raw["network"]["layers"]),
        T=iget("network", "T"),
        theta=fget("network", "theta"), tau=fget("network", "tau"),
        tau_s=fget("network", "tau_s"), R=fget("network", "R"),
        kappa=fget("network", "kappa"),
        surrogate_width=fget("network", "surrogate_width"),
        w_inh=fget("network", "w_inh"), w_init_b=w_init_b,
    )
    ablation = raw["run"]["ablation"].strip()
    if ablation not in ABLATIONS:
        raise ConfigError(f"run.ablation: unknown mode {ablation!r}, "
                          f"choose from {', '.join(ABLATIONS)}")
    if ablation == "no_motif":
        network = dataclasses.replace(network, no_motif=True)
    elif ablation == "no_inter_motif":
        network = dataclasses.replace(network, no_inter_motif=True)
    elif ablation == "fully_connected":
        network = dataclasses.replace(network, fully_connected_fixed=True)

    mode = raw["run"]["mode"].strip()
    if mode not in (MODE_SPIKING, MODE_SOFT):
        raise ConfigError(f"run.mode: expected {MODE_SPIKING} or {MODE_SOFT}, got {mode!r}")

    patience_raw = raw["search"]["patience"].strip()
    sched = SearchSchedule(
        iterations=iget("search", "iterations"),
        switch_frac=fget("search", "switch_frac"),
        batch_size=iget("search", "batch_size"),
        patience=None if patience_raw == "" else _typed(raw, "search", "patience", int, "an integer"),
        use_ip=ablation != "no_ip",
        mode=mode,
    )
    opt = OptimState(eta_arch=fget("optim", "eta_arch"), eta_w=fget("optim", "eta_w"),
                     clip=fget("optim", "clip"))
    ipcfg = IPConfig(
        mu=fget("ip", "mu"), eta_ip=fget("ip", "eta_ip"), window=iget("ip", "window"),
        bounds=(fget("ip", "r_min"), fget("ip", "r_max"),
                fget("ip", "tau_min"), fget("ip", "tau_max")),
        smoothing=fget("ip", "smoothing"), max_rel_step=fget("ip", "max_rel_step"),
    )
    ratios_raw = raw["data"]["ratios"].split(",")
    if len(ratios_raw) != 3:
        raise ConfigError(f"data.ratios: expected three comma-separated values, "
                          f"got {raw['data']['ratios']!r}")
    try:
        ratios = tuple(float(r) for r in ratios_raw)
    except ValueError:
        raise ConfigError(f"data.ratios: non-numeric entry in {raw['data']['ratios']!r}") from None
    data_seed_raw = raw["data"]["data_seed"].strip()
    eval_split = raw["run"]["eval_split"].strip()
    if eval_split not in ("train", "valid", "test"):
        raise ConfigError(f"run.eval_split: expected train, valid or test, got {eval_split!r}")

    cfg = RunConfig(
        network=network, opt=opt, ip=ipcfg, sched=sched,
        classes=iget("data", "classes"), input_size=iget("data", "input_size"),
        jitter=fget("data", "jitter"), drop_prob=fget("data", "drop_prob"),
        n_per_class=iget("data", "n_per_class"), ratios=ratios,  # type: ignore[arg-type]
        data_seed=None if data_seed_raw == "" else _typed(raw, "data", "data_seed", int, "an integer"),
        data_file=raw["data"]["file"].strip() or None,
        seed=iget("run", "seed"), out=raw["run"]["out"],
        workers=iget("run", "workers"), mode=mode, ablation=ablation,
        eval_split=eval_split, epochs=iget("search", "epochs"),
        retrain_seeds=iget("search", "retrain_seeds"), raw=raw,
    )
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    """Full cross-field validation; every failure names the offending key."""
    try:
        cfg.network.validate()
    except InvalidSpecError as exc:
        raise ConfigError(f"network.layers/network.T: {exc}") from None
    if cfg.network.n_out != cfg.classes:
        raise ConfigError(
            f"network.layers: readout size {cfg.network.n_out} must equal "
            f"data.classes {cfg.classes}")
    for k in cfg.network.recurrent_layers():
        spec = cfg.network.layers[k]
        try:
            build_layout(spec.size, cfg.network.motif_sizes_for(k),
                         inter_enabled=cfg.network.inter_enabled)
        except InvalidSpecError as exc:
            raise ConfigError(f"network.layers: layer {k}: {exc}") from None
    try:
        cfg.opt.validate()
    except ValueError as exc:
        raise ConfigError(f"optim: {exc}") from None
    try:
        cfg.ip.validate()
    except InvalidSpecError as exc:
        raise ConfigError(f"ip: {exc}") from None
    try:
        cfg.sched.validate()
    except InvalidSpecError as exc:
        raise ConfigError(f"search: {exc}") from None
    if cfg.jitter < 0 or not 0.0 <= cfg.drop_prob < 1.0:
        raise ConfigError("data.jitter must be >= 0 and data.drop_prob in [0, 1)")
    if abs(sum(cfg.ratios) - 1.0) > 1e-9:
        raise ConfigError(f"data.ratios: must sum to 1, got {sum(cfg.ratios)}")
    if cfg.workers < 1:
        raise ConfigError(f"run.workers: must be >= 1, got {cfg.workers}")
    if cfg.epochs < 1 or cfg.retrain_seeds < 1:
        raise ConfigError("search.epochs and search.retrain_seeds must be >= 1")
