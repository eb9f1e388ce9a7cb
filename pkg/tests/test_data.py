"""Unit tests for synthetic data generation, the event-file format, and
deterministic stratified splitting.

The slow check at the bottom trains a small feedforward spiking classifier
and a spike-count logistic regression on the standard toy task; the SNN must
reach 85% while the rate-only model must stay below perfect, which is what
makes the toy task a meaningful search benchmark.
"""

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from spikemotif.data import SpikeDataset, gen_synthetic, load_events, save_events, split, split_indices
from spikemotif.errors import (
    IndexOutOfRangeError,
    InvalidRatiosError,
    InvalidSpecError,
    ParseError,
)
from spikemotif.grad import OptimState, TARGET_WEIGHTS, apply_step, loss_and_grads
from spikemotif.network import LayerSpec, NetworkConfig, accuracy, forward, init_params


class TestGenSynthetic:
    def test_noiseless_examples_equal_prototype(self):
        ds = gen_synthetic(classes=3, input_size=8, T=20, jitter=0.0, drop_prob=0.0,
                           n_per_class=5, seed=1)
        by_class = {}
        for events, label in ds.examples:
            by_class.setdefault(label, set()).add(events)
        for label, variants in by_class.items():
            assert len(variants) == 1

    def test_seed_determinism(self):
        a = gen_synthetic(4, 16, 50, 1.0, 0.05, 10, seed=7)
        b = gen_synthetic(4, 16, 50, 1.0, 0.05, 10, seed=7)
        assert a == b

    def test_different_seeds_differ(self):
        a = gen_synthetic(4, 16, 50, 1.0, 0.05, 10, seed=7)
        b = gen_synthetic(4, 16, 50, 1.0, 0.05, 10, seed=8)
        assert a != b

    def test_validate_passes_and_counts(self):
        ds = gen_synthetic(4, 16, 50, 1.0, 0.05, 10, seed=7)
        ds.validate()
        assert len(ds) == 40
        counts = np.bincount(ds.labels(), minlength=4)
        np.testing.assert_array_equal(counts, 10)

    def test_bad_parameters_rejected(self):
        with pytest.raises(InvalidSpecError):
            gen_synthetic(0, 16, 50, 1.0, 0.05, 10, seed=1)
        with pytest.raises(InvalidSpecError):
            gen_synthetic(4, 16, 50, -1.0, 0.05, 10, seed=1)
        with pytest.raises(InvalidSpecError):
            gen_synthetic(4, 16, 50, 1.0, 1.5, 10, seed=1)

    def test_rasters_shape_and_binary(self):
        ds = gen_synthetic(2, 6, 10, 0.5, 0.0, 4, seed=2)
        r = ds.rasters()
        assert r.shape == (8, 6, 10)
        assert set(np.unique(r)) <= {0.0, 1.0}


class TestEventFile:
    def test_round_trip_byte_identical(self, tmp_path):
        ds = gen_synthetic(3, 8, 20, 1.0, 0.1, 6, seed=3)
        p1 = tmp_path / "a.spk"
        p2 = tmp_path / "b.spk"
        save_events(ds, p1)
        save_events(load_events(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_dataset_valid(self, tmp_path):
        ds = SpikeDataset(examples=(), input_size=4, T=10, n_classes=2)
        p = tmp_path / "empty.spk"
        save_events(ds, p)
        back = load_events(p)
        assert len(back) == 0
        assert back.input_size == 4 and back.T == 10

    def test_missing_header(self, tmp_path):
        p = tmp_path / "bad.spk"
        p.write_text("label 0\n1 2\n\n")
        with pytest.raises(ParseError) as err:
            load_events(p)
        assert err.value.lineno == 1

    def test_malformed_event_line_cites_lineno(self, tmp_path):
        p = tmp_path / "bad.spk"
        p.write_text("#SPK v1 inputs=4 T=10 classes=2\nlabel 0\n1 2 3\n\n")
        with pytest.raises(ParseError) as err:
            load_events(p)
        assert err.value.lineno == 3
        assert "line 3" in str(err.value)

    def test_event_outside_example(self, tmp_path):
        p = tmp_path / "bad.spk"
        p.write_text("#SPK v1 inputs=4 T=10 classes=2\n1 2\n")
        with pytest.raises(ParseError) as err:
            load_events(p)
        assert err.value.lineno == 2

    def test_out_of_range_event_rejected(self, tmp_path):
        p = tmp_path / "bad.spk"
        p.write_text("#SPK v1 inputs=4 T=10 classes=2\nlabel 0\n9 2\n\n")
        with pytest.raises(IndexOutOfRangeError):
            load_events(p)


class TestSplit:
    def _ds(self):
        return gen_synthetic(4, 16, 50, 1.0, 0.05, 200, seed=7)

    def test_degenerate_all_train(self):
        ds = gen_synthetic(2, 4, 10, 0.0, 0.0, 5, seed=1)
        tr, va, te = split(ds, (1.0, 0.0, 0.0), seed=0)
        assert len(tr) == 10 and len(va) == 0 and len(te) == 0

    def test_partition_disjoint_and_exhaustive(self):
        ds = self._ds()
        tr, va, te = split_indices(ds, (0.6, 0.2, 0.2), seed=5)
        all_idx = np.concatenate([tr, va, te])
        assert len(all_idx) == len(ds)
        assert len(np.unique(all_idx)) == len(ds)

    def test_stratified_counts(self):
        ds = self._ds()
        tr, va, te = split(ds, (0.6, 0.2, 0.2), seed=5)
        for part, want in ((tr, 120), (va, 40), (te, 40)):
            counts = np.bincount(part.labels(), minlength=4)
            np.testing.assert_array_equal(counts, want)

    def test_seed_determinism(self):
        ds = self._ds()
        a = split_indices(ds, (0.6, 0.2, 0.2), seed=5)
        b = split_indices(ds, (0.6, 0.2, 0.2), seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_bad_ratios(self):
        ds = gen_synthetic(2, 4, 10, 0.0, 0.0, 5, seed=1)
        with pytest.raises(InvalidRatiosError):
            split(ds, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(InvalidRatiosError):
            split(ds, (0.8, 0.4, -0.2), seed=0)


@pytest.fixture(scope="module")
def toy():
    ds = gen_synthetic(4, 16, 50, 1.0, 0.05, 200, seed=7)
    return split(ds, (0.6, 0.2, 0.2), seed=11)


class TestToyTaskHasTemporalStructure:
    """The standard toy task must not be solvable from spike counts alone,
    while a trained spiking network must do well on it."""

    def test_rate_classifier_below_perfect(self, toy):
        train, _, test = toy
        X_tr = train.rasters().sum(axis=2)
        X_te = test.rasters().sum(axis=2)
        clf = LogisticRegression(max_iter=2000)
        clf.fit(X_tr, train.labels())
        acc = clf.score(X_te, test.labels())
        assert acc < 1.0

    def test_feedforward_snn_reaches_85(self, toy):
        train, _, test = toy
        cfg = NetworkConfig(n_in=16, layers=(LayerSpec(24), LayerSpec(4)), T=50,
                            w_init_b=1.0)
        rng = np.random.Generator(np.random.PCG64(0))
        params = init_params(cfg, rng)
        opt = OptimState(eta_arch=0.0, eta_w=0.1)
        X = train.rasters()
        y = train.labels()
        for epoch in range(30):
            order = rng.permutation(len(y))
            for start in range(0, len(y), 32):
                idx = order[start:start + 32]
                _, gset, _ = loss_and_grads(cfg, params, X[idx], y[idx])
                params = apply_step(params, gset, opt, TARGET_WEIGHTS)
        act = forward(cfg, params, test.rasters())
        assert accuracy(act, test.labels()) >= 0.85
