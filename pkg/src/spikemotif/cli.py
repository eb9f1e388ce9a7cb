"""Command-line entry point.

Commands: search, train, eval, gradcheck, ablate, export. Every command
reads one config (INI file plus repeatable --set section.key=value
overrides), writes its artifacts under the configured output directory, and
exits 0 on success, 1 on a validation problem, 2 on a runtime failure.
Human-readable progress goes to stderr; machine-readable metrics go to CSV
and JSON files only.

Artifacts of a search run:
    manifest.json   resolved config, seed, package version
    metrics.csv     per-iteration losses, phase, selection probabilities,
                    mean firing rate (deterministic for a fixed seed)
    timings.csv     per-iteration wall-clock seconds (not deterministic,
                    kept out of metrics.csv on purpose)
    checkpoint.json full search state
    arch.json       discretized architecture export

Seed derivation: dataset = data.data_seed or run.seed; split = run.seed +
1009; search = run.seed; retraining seeds = run.seed + 1 .. + retrain_seeds.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import network as net
from . import relax
from . import search as searchmod
from . import verify
from .config import ABLATIONS, RunConfig, load_config
from .data import gen_synthetic, load_events, split_indices
from .errors import ConfigError
from .neuron import MODE_SOFT, NeuronIntrinsics
from .topology import build_layout

log = logging.getLogger("spikemotif")

ARCH_FORMAT_VERSION = 1


# ---------------------------------------------------------------- helpers

def _prepare_data(cfg: RunConfig):
    """Dataset plus stratified split with parent ids for the audit trail."""
    if cfg.data_file:
        ds = load_events(cfg.data_file)
        if ds.input_size != cfg.input_size or ds.n_classes != cfg.classes:
            raise ConfigError(
                f"data.file: file declares inputs={ds.input_size} classes={ds.n_classes}, "
                f"config says input_size={cfg.input_size} classes={cfg.classes}")
    else:
        data_seed = cfg.seed if cfg.data_seed is None else cfg.data_seed
        ds = gen_synthetic(cfg.classes, cfg.input_size, cfg.network.T, cfg.jitter,
                           cfg.drop_prob, cfg.n_per_class, data_seed)
    idx_train, idx_valid, idx_test = split_indices(ds, cfg.ratios, cfg.seed + 1009)
    return ds, (idx_train, idx_valid, idx_test)


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n",
                    encoding="utf-8")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_metrics_csv(state: searchmod.SearchState, path: Path) -> None:
    base = ["iteration", "phase", "train_loss", "valid_loss", "mean_rate"]
    extra = sorted({k for row in state.history for k in row} - set(base))
    cols = base + extra
    lines = [",".join(cols)]
    for row in state.history:
        lines.append(",".join(_fmt(row[c]) if c in row else "" for c in cols))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_timings_csv(state: searchmod.SearchState, path: Path) -> None:
    lines = ["iteration,seconds"]
    lines += [f"{i},{t!r}" for i, t in enumerate(state.timings)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_manifest(cfg: RunConfig, out: Path, command: str) -> None:
    payload = cfg.manifest()
    payload["command"] = command
    _write_json(payload, out / "manifest.json")


def _intr_summary(intr: NeuronIntrinsics) -> dict:
    def stats(arr):
        return {"mean": float(arr.mean()), "min": float(arr.min()),
                "max": float(arr.max())}
    return {"R": stats(intr.R), "tau": stats(intr.tau),
            "theta": intr.theta, "tau_s": intr.tau_s}


def arch_payload(cfg: RunConfig, state: searchmod.SearchState,
                 discrete: dict[int, searchmod.DiscreteArchitecture]) -> dict:
    """Discretized architecture export.

    Core fields describe the first recurrent layer (motif_size, layer_size,
    kept edges with their weights, intrinsics summary). The full parameter
    arrays needed to re-run the exact network (feedforward weights, every
    layer's intrinsics) ride along under "full".
    """
    k = min(discrete)
    d = discrete[k]
    es = d.layout.edges[d.motif_size]
    edges = []
    for e in d.kept_edges():
        t = int(d.types[e])
        edges.append({
            "from": int(es.src[e]),
            "to": int(es.dst[e]),
            "type": relax.TYPE_NAMES[t],
            "weight": float(d.w_exc[e]) if t == relax.EXCITATORY else -d.w_inh,
        })
    payload = {
        "format_version": ARCH_FORMAT_VERSION,
        "layer_index": k,
        "motif_size": d.motif_size,
        "layer_size": d.layout.n,
        "inter_motif": d.layout.inter_enabled,
        "w_inh": d.w_inh,
        "edges": edges,
        "intrinsics": _intr_summary(state.params.intr[k]),
        "full": {
            "w_ff": [w.tolist() for w in state.params.w_ff],
            "intr": [{"R": i.R.tolist(), "tau": i.tau.tolist(), "theta": i.theta,
                      "tau_s": i.tau_s} for i in state.params.intr],
            "types": {str(kk): dd.types.tolist() for kk, dd in discrete.items()},
            "w_exc": {str(kk): dd.w_exc.tolist() for kk, dd in discrete.items()},
            "motif_size": {str(kk): dd.motif_size for kk, dd in discrete.items()},
            "w_inh": {str(kk): dd.w_inh for kk, dd in discrete.items()},
        },
    }
    return payload


def load_arch(path, cfg: RunConfig):
    """Rebuild (discrete architectures, feedforward weights, intrinsics)
    from an arch.json written by arch_payload."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"architecture file {path}: {exc}") from None
    if payload.get("format_version") != ARCH_FORMAT_VERSION:
        raise ConfigError(f"architecture file {path}: unsupported format_version "
                          f"{payload.get('format_version')!r}")
    full = payload["full"]
    discrete = {}
    for key, v_star in full["motif_size"].items():
        k = int(key)
        n = cfg.network.layers[k].size
        layout = build_layout(n, (int(v_star),),
                              inter_enabled=bool(payload["inter_motif"]))
        discrete[k] = searchmod.DiscreteArchitecture(
            motif_size=int(v_star),
            types=np.array(full["types"][key], dtype=np.int64),
            layout=layout,
            w_inh=float(full["w_inh"][key]),
            w_exc=np.array(full["w_exc"][key], dtype=np.float64))
    w_ff = [np.array(w, dtype=np.float64) for w in full["w_ff"]]
    intr = [NeuronIntrinsics(R=np.array(i["R"]), tau=np.array(i["tau"]),
                             theta=float(i["theta"]), tau_s=float(i["tau_s"]))
            for i in full["intr"]]
    return discrete, w_ff, intr


def _print_accuracy_table(result: searchmod.RetrainResult, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"{'Mean':>8} {'Std':>8} {'Best':>8}", file=stream)
    print(f"{100 * result.mean:>8.2f} {100 * result.std:>8.2f} "
          f"{100 * result.best:>8.2f}", file=stream)


def _retrain_seeds(cfg: RunConfig) -> list[int]:
    return [cfg.seed + 1 + i for i in range(cfg.retrain_seeds)]


# ---------------------------------------------------------------- commands

def cmd_search(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, "search")
    ds, (idx_train, idx_valid, _) = _prepare_data(cfg)
    train_ds, valid_ds = ds.subset(idx_train), ds.subset(idx_valid)
    log.info("search: %d train / %d valid examples, %d iterations",
             len(train_ds), len(valid_ds), cfg.sched.iterations)
    tick = time.perf_counter()
    state = searchmod.run_search(cfg.network, train_ds, valid_ds, cfg.opt, cfg.ip,
                                 cfg.sched, cfg.seed, train_ids=idx_train,
                                 valid_ids=idx_valid)
    searchmod.assert_separation(state)
    discrete = searchmod.discretize(state)
    searchmod.save_checkpoint(state, out / "checkpoint.json")
    _write_metrics_csv(state, out / "metrics.csv")
    _write_timings_csv(state, out / "timings.csv")
    _write_json(arch_payload(cfg, state, discrete), out / "arch.json")
    for k, d in discrete.items():
        kept = len(d.kept_edges())
        log.info("search: layer %d -> motif size %d, %d/%d edges kept",
                 k, d.motif_size, kept, len(d.types))
    log.info("search: finished in %.1fs, artifacts in %s",
             time.perf_counter() - tick, out)
    return 0


def cmd_train(cfg: RunConfig, arch_file: str) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, "train")
    discrete, _, intr = load_arch(arch_file, cfg)
    ds, (idx_train, _, idx_test) = _prepare_data(cfg)
    seeds = _retrain_seeds(cfg)
    log.info("train: retraining %d seed(s) for %d epoch(s)", len(seeds), cfg.epochs)
    result = searchmod.retrain(cfg.network, discrete, ds.subset(idx_train),
                               ds.subset(idx_test), cfg.opt, seeds, cfg.epochs,
                               cfg.sched.batch_size, intr=intr, mode=cfg.mode)
    rows = ["seed,test_accuracy,test_loss"]
    rows += [f"{s},{a!r},{l!r}" for s, a, l in
             zip(seeds, result.accuracies, result.losses)]
    (out / "retrain.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    _print_accuracy_table(result)
    return 0


def cmd_eval(cfg: RunConfig, arch_file: str) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, "eval")
    discrete, w_ff, intr = load_arch(arch_file, cfg)
    ds, idx = _prepare_data(cfg)
    which = {"train": 0, "valid": 1, "test": 2}[cfg.eval_split]
    subset = ds.subset(idx[which])
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params, layouts = searchmod.params_from_discrete(cfg.network, discrete, rng,
                                                     intr=intr, retain_weights=True)
    params.w_ff = w_ff
    loss, acc = searchmod.evaluate(cfg.network, params, subset, layouts, mode=cfg.mode)
    (out / "eval.csv").write_text(
        f"split,examples,accuracy,mean_loss\n"
        f"{cfg.eval_split},{len(subset)},{acc!r},{loss!r}\n", encoding="utf-8")
    print(f"{cfg.eval_split} accuracy {100 * acc:.2f}% over {len(subset)} examples "
          f"(mean loss {loss:.4f})")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, "gradcheck")
    ds, (idx_train, _, _) = _prepare_data(cfg)
    batch = ds.subset(idx_train[:8])
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    layouts = net.build_layouts(cfg.network)
    params = net.init_params(cfg.network, rng, layouts=layouts)
    report = verify.gradcheck(cfg.network, params, batch.rasters(), batch.labels(),
                              seed=cfg.seed, mode=MODE_SOFT, layouts=layouts)
    report.to_csv(out / "gradcheck.csv")
    print(report.as_table())
    return 0 if report.passed else 2


def _fully_connected_discrete(cfg: RunConfig) -> dict[int, searchmod.DiscreteArchitecture]:
    out = {}
    for k in cfg.network.recurrent_layers():
        n = cfg.network.layers[k].size
        layout = build_layout(n, (n,), inter_enabled=cfg.network.inter_enabled)
        types = np.full(len(layout.edges[n]), relax.EXCITATORY, dtype=np.int64)
        out[k] = searchmod.DiscreteArchitecture(motif_size=n, types=types,
                                                layout=layout, w_inh=cfg.network.w_inh)
    return out


def cmd_ablate(cfg: RunConfig, mode: str) -> int:
    if mode not in ABLATIONS[1:]:
        raise ConfigError(f"unknown ablation mode {mode!r}, "
                          f"choose from {', '.join(ABLATIONS[1:])}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, f"ablate:{mode}")
    ds, (idx_train, idx_valid, idx_test) = _prepare_data(cfg)
    train_ds, valid_ds = ds.subset(idx_train), ds.subset(idx_valid)
    intr = None
    if mode == "fully_connected":
        # pure baseline: fixed dense excitatory architecture, no search
        discrete = _fully_connected_discrete(cfg)
    else:
        state = searchmod.run_search(cfg.network, train_ds, valid_ds, cfg.opt,
                                     cfg.ip, cfg.sched, cfg.seed,
                                     train_ids=idx_train, valid_ids=idx_valid)
        discrete = searchmod.discretize(state)
        intr = state.params.intr
        _write_metrics_csv(state, out / f"metrics_{mode}.csv")
    result = searchmod.retrain(cfg.network, discrete, train_ds, ds.subset(idx_test),
                               cfg.opt, _retrain_seeds(cfg), cfg.epochs,
                               cfg.sched.batch_size, intr=intr, mode=cfg.mode)
    comparison = out / "ablation.csv"
    if not comparison.exists():
        comparison.write_text("mode,mean,std,best\n", encoding="utf-8")
    with open(comparison, "a", encoding="utf-8") as fh:
        fh.write(f"{mode},{result.mean!r},{result.std!r},{result.best!r}\n")
    _print_accuracy_table(result)
    return 0


def cmd_export(cfg: RunConfig, checkpoint: str) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    state = searchmod.load_checkpoint(checkpoint, cfg.network)
    if state.phase != searchmod.PHASE_MOTIF_FIXED:
        log.info("export: checkpoint still in phase %r, fixing motif size now",
                 state.phase)
        searchmod.fix_motif_size(state)
    discrete = searchmod.discretize(state)
    _write_json(arch_payload(cfg, state, discrete), out / "arch.json")
    log.info("export: wrote %s", out / "arch.json")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikemotif",
        description="Motif-structured spiking network simulator and "
                    "architecture search")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.out directory")
        p.add_argument("--workers", type=int, default=None,
                       help="override run.workers")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       dest="overrides", help="override section.key=value")

    common(sub.add_parser("search", help="run the architecture search"))
    p = sub.add_parser("train", help="retrain a discretized architecture")
    common(p)
    p.add_argument("arch", help="arch.json produced by search/export")
    p = sub.add_parser("eval", help="evaluate an exported architecture as-is")
    common(p)
    p.add_argument("arch", help="arch.json produced by search/export")
    common(sub.add_parser("gradcheck", help="finite-difference gradient check"))
    p = sub.add_parser("ablate", help="search/baseline under one ablation toggle")
    common(p)
    p.add_argument("mode", help=f"one of: {', '.join(ABLATIONS[1:])}")
    p = sub.add_parser("export", help="discretize a checkpoint into arch.json")
    common(p)
    p.add_argument("checkpoint", help="checkpoint.json from a search run")
    return parser


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.command == "ablate":
            overrides.append(f"run.ablation={args.mode}")
        cfg = load_config(args.config, overrides, seed=args.seed, out=args.out,
                          workers=args.workers)
        if args.command == "search":
            return cmd_search(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.arch)
        if args.command == "eval":
            return cmd_eval(cfg, args.arch)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg, args.mode)
        if args.command == "export":
            return cmd_export(cfg, args.checkpoint)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
