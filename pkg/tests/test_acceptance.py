"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints a single PASS line with the measured numbers (visible with
pytest -s, and on failure), so a release run documents itself:

1. soft-mode analytic gradients match central finite differences for all
   four parameter groups,
2. the mixed recurrent drive equals a naive brute-force enumeration,
3. one-hot selections collapse the relaxed network onto the discrete
   simulation bit for bit,
4. selection probabilities are normalized, shift-invariant, and break ties
   by the declared orders,
5. intrinsic plasticity regulates a driven neuron's firing rate toward the
   target and tightens the fit to the exponential rate profile,
6. the architecture search beats chance and a random-wiring baseline on the
   synthetic task,
7. searching with plasticity does at least as well as without, and every
   ablation toggle runs to completion,
8. equal seeds give byte-identical artifacts and the audit trail proves
   architecture and weight gradients never shared a data split.
"""

import dataclasses
import json
import time
from types import SimpleNamespace

import numpy as np
import pytest

from spikemotif.cli import main
from spikemotif.data import gen_synthetic, split, split_indices
from spikemotif.grad import OptimState
from spikemotif.ip import (
    IPConfig,
    RateEstimate,
    empirical_exponential_kl,
    ip_step,
)
from spikemotif.network import (
    KIND_RECURRENT,
    LayerSpec,
    NetworkConfig,
    forward,
    init_params,
    simulate_dense,
)
from spikemotif.neuron import NeuronIntrinsics, lif_step
from spikemotif.relax import (
    ABSENT,
    EXCITATORY,
    INHIBITORY,
    ArchParams,
    RecurrentWeights,
    mixed_recurrent_current,
    softmax_probs,
)
from spikemotif.search import (
    SearchSchedule,
    SearchState,
    assert_separation,
    discretize,
    fix_motif_size,
    params_from_discrete,
    random_discrete,
    retrain,
    run_search,
)
from spikemotif.topology import build_layout
from spikemotif.verify import brute_force_current, gradcheck
from spikemotif.network import build_layouts


class TestGradientFidelity:
    def test_soft_gradients_match_finite_differences_all_groups(self):
        """Analytic gradients for feedforward weights, trained recurrent
        weights, motif-size logits and connection-type logits agree with
        central differences to 1e-4 relative error, 60 samples per group,
        on a two-layer 16-neuron net, in under a minute."""
        start = time.monotonic()
        cfg = NetworkConfig(n_in=6, layers=(LayerSpec(12, KIND_RECURRENT, (2, 3)),
                                            LayerSpec(4)), T=10, w_init_b=1.2)
        rng = np.random.Generator(np.random.PCG64(5))
        layouts = build_layouts(cfg)
        params = init_params(cfg, rng, layouts=layouts)
        arch = params.arch[0]
        arch.motif_logits = arch.motif_logits + rng.normal(0, 0.5, arch.motif_logits.shape)
        for v in arch.sizes:
            arch.conn_logits[v] = arch.conn_logits[v] + rng.normal(
                0, 0.5, arch.conn_logits[v].shape)
        spikes = (rng.random((8, 6, 10)) < 0.3).astype(np.float64)
        labels = rng.integers(0, 4, size=8)
        report = gradcheck(cfg, params, spikes, labels, tolerance=1e-4,
                           sample_count=60, seed=3, layouts=layouts)
        elapsed = time.monotonic() - start
        names = {g.name for g in report.groups}
        assert names == {"w_ff", "w_exc", "conn_logits", "motif_logits"}
        for g in report.groups:
            assert g.checked >= 50, g.name
            assert g.max_rel_err <= 1e-4, (g.name, g.max_rel_err)
            # nonzero difference proves both routes produced real signal
            # (exact zeros would mean the comparison never saw a gradient)
            assert g.max_abs_diff > 0.0, g.name
        assert report.passed
        assert elapsed <= 60.0
        worst = max(g.max_rel_err for g in report.groups)
        worst_abs = max(g.max_abs_diff for g in report.groups)
        print(f"\ngradient fidelity: PASS (4 groups, 60 samples each, "
              f"max rel err {worst:.2e}, max abs diff {worst_abs:.2e}, "
              f"{elapsed:.1f}s)")


class TestMixtureEquivalence:
    def test_mixed_current_matches_brute_force_on_1000_configs(self):
        """The vectorized mixed recurrent drive equals the scalar
        enumeration over (motif size, edge, type) on 1000 random
        12-neuron configurations with candidate sizes {2, 4}, within
        1e-12, in under ten seconds."""
        start = time.monotonic()
        rng = np.random.Generator(np.random.PCG64(17))
        layout = build_layout(12, (2, 4))
        worst = 0.0
        for _ in range(1000):
            arch = ArchParams(
                sizes=(2, 4),
                motif_logits=rng.normal(0, 1, size=2),
                conn_logits={v: rng.normal(0, 1, size=(len(layout.edges[v]), 3))
                             for v in (2, 4)})
            w = RecurrentWeights(
                w_exc={v: rng.random(len(layout.edges[v])) for v in (2, 4)},
                w_inh=float(rng.random() + 0.5))
            a = rng.random((12, 5))
            t = int(rng.integers(1, 5))
            i = int(rng.integers(0, 12))
            slow = brute_force_current(i, t, a, arch, w, layout)
            fast = mixed_recurrent_current(i, a[:, t - 1], arch, w, layout)
            err = abs(slow - fast) / max(abs(slow), abs(fast), 1.0)
            worst = max(worst, err)
            assert err <= 1e-12, (i, t, slow, fast)
        elapsed = time.monotonic() - start
        assert elapsed <= 10.0
        print(f"\nmixture equivalence: PASS (1000 configs, worst rel err "
              f"{worst:.2e}, {elapsed:.1f}s)")


class TestOneHotCollapse:
    def test_one_hot_relaxation_collapses_bitwise_20_seeds(self):
        """With selections forced one-hot, the relaxed forward pass and the
        plain dense simulation of the committed architecture produce
        byte-identical membrane, spike and current trajectories."""
        for seed in range(20):
            rng = np.random.Generator(np.random.PCG64(seed))
            cfg = NetworkConfig(n_in=3, layers=(LayerSpec(8, KIND_RECURRENT, (2, 4)),
                                                LayerSpec(2)), T=8, w_init_b=1.0)
            layouts = build_layouts(cfg)
            params = init_params(cfg, rng, layouts=layouts)
            arch = params.arch[0]
            arch.motif_logits = rng.normal(0, 1, size=arch.motif_logits.shape)
            for v in arch.sizes:
                arch.conn_logits[v] = rng.normal(0, 1, arch.conn_logits[v].shape)
            state = SearchState(config=cfg, params=params, layouts=layouts)
            fix_motif_size(state)
            d = discretize(state)
            pinned, use_layouts = params_from_discrete(cfg, d, rng,
                                                       retain_weights=True)
            spikes = (rng.random((4, 3, 8)) < 0.4).astype(np.float64)
            relaxed = forward(cfg, pinned, spikes, layouts=use_layouts)
            dense = simulate_dense(cfg, pinned.w_ff, {0: d[0].dense_matrix()},
                                   pinned.intr, spikes)
            for k in range(2):
                assert relaxed.u_pre[k].tobytes() == dense.u_pre[k].tobytes(), seed
                assert relaxed.s[k].tobytes() == dense.s[k].tobytes(), seed
                assert relaxed.a[k].tobytes() == dense.a[k].tobytes(), seed
        print("\none-hot collapse: PASS (bitwise equal trajectories, 20 seeds)")


class TestSelectionInvariants:
    def test_softmax_invariants_and_declared_tie_breaks(self, caplog):
        """Probabilities sum to one within 1e-12 and are invariant to logit
        shifts; equal-logit ties commit to the smallest motif size and to
        the excitatory connection type."""
        rng = np.random.Generator(np.random.PCG64(23))
        for _ in range(200):
            n = int(rng.integers(1, 9))
            logits = rng.uniform(-50, 50, size=n)
            p = softmax_probs(logits)
            assert abs(p.sum() - 1.0) <= 1e-12
            c = float(rng.uniform(-100, 100))
            q = softmax_probs(logits + c)
            np.testing.assert_allclose(q, p, atol=1e-12)
            assert int(np.argmax(q)) == int(np.argmax(p))

        cfg = NetworkConfig(n_in=3, layers=(LayerSpec(8, KIND_RECURRENT, (2, 4)),
                                            LayerSpec(2)), T=8)
        layouts = build_layouts(cfg)
        params = init_params(cfg, np.random.Generator(np.random.PCG64(0)),
                             layouts=layouts)
        params.arch[0].motif_logits = np.zeros(2)
        state = SearchState(config=cfg, params=params, layouts=layouts)
        with caplog.at_level("INFO"):
            fix_motif_size(state)
        assert state.params.arch[0].motif_fixed == 2  # smallest candidate
        assert any("tie" in rec.message for rec in caplog.records)

        caplog.clear()
        params.arch[0].conn_logits[2] = np.zeros_like(params.arch[0].conn_logits[2])
        with caplog.at_level("INFO"):
            d = discretize(state)
        assert np.all(d[0].types == EXCITATORY)
        assert any("tie" in rec.message for rec in caplog.records)
        print("\nselection invariants: PASS (normalization 1e-12, shift "
              "invariance, both tie orders exercised)")


class TestRateRegulation:
    def test_ip_regulates_rate_and_tightens_exponential_fit(self):
        """Ten independent single neurons under per-window random drive:
        after 200 plasticity windows the mean firing rate sits within 20%
        of the target and the rate histogram moves strictly closer to the
        exponential profile, in at least 9 of 10 seeds, under a minute."""
        start = time.monotonic()
        n_seeds, window, n_windows, mu = 10, 600, 200, 0.1
        smoothing = 100.0
        cfg = IPConfig(mu=mu, eta_ip=4.0, smoothing=smoothing,
                       bounds=(1.0, 10.0, 2.0, 32.0))
        gens = [np.random.Generator(np.random.PCG64(300 + k))
                for k in range(n_seeds)]
        drives = np.stack([g.uniform(1.6, 2.4, size=3 * n_windows)
                           for g in gens], axis=1)
        intr = NeuronIntrinsics(R=np.ones(n_seeds), tau=np.full(n_seeds, 4.0))

        def run_window(drive_row):
            u = np.zeros(n_seeds)
            y = np.zeros(n_seeds)
            count = np.zeros(n_seeds)
            gamma = 1.0 / smoothing
            for _ in range(window):
                u, s = lif_step(u, drive_row, intr)
                count += s
                y = (1 - gamma) * y + gamma * s
            return count / window, y

        pre = np.array([run_window(d)[0] for d in drives[:n_windows]])
        for d in drives[n_windows:2 * n_windows]:
            _, y = run_window(d)
            intr = ip_step(RateEstimate(y=y, mean_drive=d), intr, cfg)
        post = np.array([run_window(d)[0] for d in drives[2 * n_windows:]])

        passed = 0
        rates = []
        for k in range(n_seeds):
            mean_rate = post[:, k].mean()
            kl_pre = empirical_exponential_kl(pre[:, k], mu)
            kl_post = empirical_exponential_kl(post[:, k], mu)
            rates.append(mean_rate)
            if abs(mean_rate - mu) <= 0.2 * mu and kl_post < kl_pre:
                passed += 1
        elapsed = time.monotonic() - start
        assert passed >= 9, rates
        assert elapsed <= 60.0
        print(f"\nrate regulation: PASS ({passed}/10 seeds, post rates "
              f"{min(rates):.3f}-{max(rates):.3f} vs target {mu}, {elapsed:.1f}s)")


TOY_SEEDS = [8, 9, 10, 11, 12]


@pytest.fixture(scope="module")
def toy_pipeline():
    """Search, discretize and retrain on the synthetic task once; both
    end-to-end tests read from this. Wall-clock pieces are timed separately
    so the search-plus-baseline budget can be asserted."""
    ds = gen_synthetic(classes=4, input_size=16, T=50, jitter=1.0,
                       drop_prob=0.05, n_per_class=200, seed=7)
    train, valid, test = split(ds, (0.6, 0.2, 0.2), seed=7 + 1009)
    cfg = NetworkConfig(n_in=16, layers=(LayerSpec(16, KIND_RECURRENT, (2, 4, 8)),
                                         LayerSpec(4)), T=50, w_init_b=1.0,
                        w_inh=1.0)
    opt = OptimState(eta_arch=1.0, eta_w=0.1)
    ipcfg = IPConfig(mu=0.2)
    sched = SearchSchedule(iterations=300, batch_size=32)

    t0 = time.monotonic()
    state = run_search(cfg, train, valid, opt, ipcfg, sched, seed=7)
    full = retrain(cfg, discretize(state), train, test, OptimState(0.0, 0.1),
                   seeds=TOY_SEEDS, epochs=60, batch_size=32,
                   intr=state.params.intr)
    t_search = time.monotonic() - t0

    t0 = time.monotonic()
    random_means = []
    for k in range(5):
        rng = np.random.Generator(np.random.PCG64(1000 + k))
        res = retrain(cfg, random_discrete(cfg, rng), train, test,
                      OptimState(0.0, 0.1), seeds=TOY_SEEDS, epochs=60,
                      batch_size=32)
        random_means.append(res.mean)
    t_baseline = time.monotonic() - t0

    return SimpleNamespace(cfg=cfg, train=train, valid=valid, test=test,
                           opt=opt, ipcfg=ipcfg, sched=sched, full=full,
                           random_means=random_means, t_search=t_search,
                           t_baseline=t_baseline)


class TestToySearch:
    def test_toy_search_reaches_90_and_beats_random_baseline(self, toy_pipeline):
        """On the 4-class synthetic task the searched architecture,
        retrained from scratch over 5 seeds, reaches at least 90% mean test
        accuracy and at least the mean of random-wiring baselines retrained
        identically, inside a 10 minute budget."""
        p = toy_pipeline
        rand_mean = float(np.mean(p.random_means))
        elapsed = p.t_search + p.t_baseline
        assert p.full.mean >= 0.90, p.full.accuracies
        assert p.full.mean >= rand_mean, (p.full.mean, p.random_means)
        assert elapsed <= 600.0
        print(f"\ntoy search: PASS (searched {p.full.mean:.4f} >= 0.90 and >= "
              f"random {rand_mean:.4f}, {elapsed:.0f}s)")


class TestAblationDirection:
    def test_ip_ablation_direction_and_all_modes_complete(self, toy_pipeline):
        """Searching with intrinsic plasticity scores at least as high as
        the no-plasticity ablation over the same 5 retrain seeds, and every
        ablation toggle completes the search-retrain pipeline."""
        p = toy_pipeline
        no_ip_sched = dataclasses.replace(p.sched, use_ip=False)
        st = run_search(p.cfg, p.train, p.valid, p.opt, p.ipcfg, no_ip_sched,
                        seed=7)
        no_ip = retrain(p.cfg, discretize(st), p.train, p.test,
                        OptimState(0.0, 0.1), seeds=TOY_SEEDS, epochs=60,
                        batch_size=32, intr=st.params.intr)
        assert p.full.mean >= no_ip.mean, (p.full.mean, no_ip.mean)

        completed = ["no_ip"]
        for flag in ("no_motif", "no_inter_motif", "fully_connected_fixed"):
            cfg = dataclasses.replace(p.cfg, **{flag: True})
            state = run_search(cfg, p.train, p.valid, p.opt, p.ipcfg, p.sched,
                               seed=7)
            res = retrain(cfg, discretize(state), p.train, p.test,
                          OptimState(0.0, 0.1), seeds=TOY_SEEDS, epochs=60,
                          batch_size=32, intr=state.params.intr)
            assert 0.0 <= res.mean <= 1.0
            completed.append(flag)
        assert len(completed) == 4
        print(f"\nablation direction: PASS (full {p.full.mean:.4f} >= no_ip "
              f"{no_ip.mean:.4f}; modes completed: {', '.join(completed)})")


class TestDeterminismAndSeparation:
    def test_same_seed_bit_identical_and_grad_separation(self, tmp_path):
        """Two runs with one seed write byte-identical metrics and
        architecture files, and the audit trail shows weight gradients
        consumed only training ids while architecture gradients consumed
        only validation ids."""
        sets = ["network.layers=recurrent:6:2,3 feedforward:2",
                "network.T=10", "data.classes=2", "data.input_size=4",
                "data.n_per_class=20", "search.iterations=12",
                "search.batch_size=8", "search.epochs=2",
                "search.retrain_seeds=2"]
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            args = ["search", "--out", str(out), "--seed", "11"]
            for s in sets:
                args += ["--set", s]
            assert main(args) == 0
            outs.append(out)
        metrics_a = (outs[0] / "metrics.csv").read_bytes()
        metrics_b = (outs[1] / "metrics.csv").read_bytes()
        arch_a = (outs[0] / "arch.json").read_bytes()
        arch_b = (outs[1] / "arch.json").read_bytes()
        assert metrics_a == metrics_b
        assert arch_a == arch_b

        ds = gen_synthetic(2, 4, 10, 0.5, 0.0, 20, seed=11)
        tr_idx, va_idx, _ = split_indices(ds, (0.6, 0.2, 0.2), seed=12)
        cfg = NetworkConfig(n_in=4, layers=(LayerSpec(6, KIND_RECURRENT, (2, 3)),
                                            LayerSpec(2)), T=10)
        state = run_search(cfg, ds.subset(tr_idx), ds.subset(va_idx),
                           OptimState(0.5, 0.1), IPConfig(),
                           SearchSchedule(iterations=12, batch_size=8), seed=11,
                           train_ids=tr_idx, valid_ids=va_idx)
        assert_separation(state)
        train_ids, valid_ids = set(tr_idx.tolist()), set(va_idx.tolist())
        weight_events = [e for e in state.audit if e.purpose == "weight_grad"]
        arch_events = [e for e in state.audit if e.purpose == "arch_grad"]
        assert weight_events and arch_events
        for e in weight_events:
            assert set(e.ids) <= train_ids
        for e in arch_events:
            assert set(e.ids) <= valid_ids
        print(f"\ndeterminism and separation: PASS (bitwise artifacts; "
              f"{len(weight_events)} weight-gradient batches on train ids, "
              f"{len(arch_events)} architecture-gradient batches on "
              f"validation ids)")
