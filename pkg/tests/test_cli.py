"""End-to-end tests of the command-line interface: artifacts, exit codes,
determinism, and validation messages."""

import json

import pytest

from spikemotif.cli import main


def tiny_args(out, **extra):
    """Overrides shared by the fast CLI runs; extra entries are section.key
    strings mapped to values."""
    sets = {
        "network.layers": "recurrent:4:2,4 feedforward:2",
        "network.T": "8",
        "data.classes": "2",
        "data.input_size": "3",
        "data.n_per_class": "12",
        "data.jitter": "0.5",
        "data.drop_prob": "0.0",
        "search.iterations": "4",
        "search.batch_size": "6",
        "search.epochs": "2",
        "search.retrain_seeds": "2",
    }
    sets.update(extra)
    args = ["--out", str(out), "--seed", "7"]
    for key, value in sets.items():
        args += ["--set", f"{key}={value}"]
    return args


ARTIFACTS = ("manifest.json", "metrics.csv", "timings.csv", "checkpoint.json",
             "arch.json")


class TestSearchCommand:
    def test_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "run"
        assert main(["search", *tiny_args(out)]) == 0
        for name in ARTIFACTS:
            assert (out / name).exists(), name
        payload = json.loads((out / "arch.json").read_text())
        assert payload["format_version"] == 1
        assert payload["motif_size"] in (2, 4)
        assert payload["layer_size"] == 4
        for edge in payload["edges"]:
            assert set(edge) == {"from", "to", "type", "weight"}
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header.startswith("iteration,phase,train_loss,valid_loss,mean_rate")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7 and manifest["command"] == "search"
        assert manifest["config"]["network"]["T"] == "8"

    def test_same_seed_identical_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["search", *tiny_args(out1)]) == 0
        assert main(["search", *tiny_args(out2)]) == 0
        assert (out1 / "arch.json").read_bytes() == (out2 / "arch.json").read_bytes()
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()

    def test_indivisible_motif_size_names_the_key(self, tmp_path, capsys):
        rc = main(["search", *tiny_args(tmp_path / "x",
                                        **{"network.layers":
                                           "recurrent:4:3 feedforward:2"})])
        assert rc == 1
        err = capsys.readouterr().err
        assert "network.layers" in err

    def test_no_writes_outside_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        out = tmp_path / "only"
        assert main(["search", *tiny_args(out)]) == 0
        assert [p.name for p in tmp_path.iterdir()] == ["only"]


class TestTrainEvalCommands:
    @pytest.fixture()
    def noiseless(self, tmp_path):
        """A searched arch.json on a memorizable (noise-free) dataset."""
        out = tmp_path / "searched"
        args = tiny_args(out, **{"network.T": "12", "data.input_size": "4",
                                 "data.jitter": "0.0", "data.n_per_class": "10",
                                 "search.iterations": "20",
                                 "search.batch_size": "8",
                                 "run.mode": "soft"})
        assert main(["search", *args]) == 0
        return out / "arch.json", args

    def test_eval_memorizes_noiseless_train_split(self, tmp_path, noiseless, capsys):
        arch, args = noiseless
        out = tmp_path / "eval"
        args = [a if a != str(arch.parent) else str(out) for a in args]
        args += ["--set", "run.eval_split=train"]
        assert main(["eval", *args, str(arch)]) == 0
        assert "accuracy 100.00%" in capsys.readouterr().out
        body = (out / "eval.csv").read_text().splitlines()[1]
        assert body.startswith("train,") and ",1.0," in body

    def test_train_reports_mean_std_best(self, tmp_path, noiseless, capsys):
        arch, args = noiseless
        out = tmp_path / "train"
        args = [a if a != str(arch.parent) else str(out) for a in args]
        assert main(["train", *args, str(arch)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["Mean", "Std", "Best"]
        assert len(lines[1].split()) == 3
        rows = (out / "retrain.csv").read_text().splitlines()
        assert rows[0] == "seed,test_accuracy,test_loss"
        assert len(rows) == 3  # two retrain seeds

    def test_missing_arch_file_fails(self, tmp_path, capsys):
        rc = main(["eval", *tiny_args(tmp_path / "e"), str(tmp_path / "nope.json")])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_default_toy_config_passes(self, tmp_path, capsys):
        out = tmp_path / "gc"
        assert main(["gradcheck", "--out", str(out), "--seed", "7"]) == 0
        table = capsys.readouterr().out
        for group in ("w_ff", "w_exc", "conn_logits", "motif_logits"):
            assert group in table
        lines = (out / "gradcheck.csv").read_text().strip().splitlines()
        assert all(line.endswith(",1") for line in lines[1:])


class TestAblateCommand:
    def test_unknown_mode_lists_choices(self, tmp_path, capsys):
        rc = main(["ablate", *tiny_args(tmp_path / "ab"), "bogus"])
        assert rc == 1
        err = capsys.readouterr().err
        for mode in ("no_ip", "no_motif", "no_inter_motif", "fully_connected"):
            assert mode in err

    def test_two_modes_append_to_comparison(self, tmp_path, capsys):
        out = tmp_path / "ab"
        assert main(["ablate", *tiny_args(out), "fully_connected"]) == 0
        assert main(["ablate", *tiny_args(out), "no_ip"]) == 0
        rows = (out / "ablation.csv").read_text().strip().splitlines()
        assert rows[0] == "mode,mean,std,best"
        assert rows[1].startswith("fully_connected,")
        assert rows[2].startswith("no_ip,")
        assert (out / "metrics_no_ip.csv").exists()


class TestExportCommand:
    def test_checkpoint_reexport_matches_search_arch(self, tmp_path):
        out = tmp_path / "run"
        assert main(["search", *tiny_args(out)]) == 0
        out2 = tmp_path / "re"
        args = [a if a != str(out) else str(out2) for a in tiny_args(out)]
        assert main(["export", *args, str(out / "checkpoint.json")]) == 0
        assert (out2 / "arch.json").read_bytes() == (out / "arch.json").read_bytes()


class TestConfigValidation:
    def test_unknown_override_key(self, tmp_path, capsys):
        rc = main(["search", "--out", str(tmp_path / "x"), "--set", "foo.bar=1"])
        assert rc == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_readout_must_match_classes(self, tmp_path, capsys):
        rc = main(["search", *tiny_args(tmp_path / "x",
                                        **{"data.classes": "3"})])
        assert rc == 1
        assert "classes" in capsys.readouterr().err

    def test_config_file_plus_override(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[search]\niterations = 3\n[network]\n"
                       "layers = recurrent:4:2 feedforward:2\nT = 8\n"
                       "[data]\nclasses = 2\ninput_size = 3\nn_per_class = 12\n"
                       "jitter = 0.5\ndrop_prob = 0.0\n")
        out = tmp_path / "run"
        rc = main(["search", "--config", str(ini), "--out", str(out),
                   "--seed", "3", "--set", "search.batch_size=6",
                   "--set", "search.retrain_seeds=2", "--set", "search.epochs=2"])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["search"]["iterations"] == "3"
        assert manifest["config"]["search"]["batch_size"] == "6"
        assert manifest["seed"] == 3
