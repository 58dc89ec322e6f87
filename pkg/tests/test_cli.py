import json
from pathlib import Path

import pytest

from netgen.cli import main
from netgen.dataset import load_dataset


def base_config(tmp_path, **overrides):
    cfg = {
        "dataset": {
            "synth": {
                "v": 6,
                "t": 24,
                "n": 16,
                "modules": {"m1": 3, "m2": 3},
                "planted": "m1",
                "effect": 2.0,
                "noise": 1.0,
                "seed": 3,
            }
        },
        "encoder": {"kind": "gru", "window": 8, "dim": 4},
        "predictor": {"pooling": "concat", "widths": [8, 4], "mlp_hidden": 8},
        "loss": {"alpha": 1e-3, "beta": 1e-3, "gamma": 1e-4},
        "train": {
            "lr": 1e-3,
            "weight_decay": 1e-4,
            "batch_size": 8,
            "epochs": 2,
            "split": {"train": 0.5, "val": 0.25, "test": 0.25},
        },
        "seeds": [0],
        "out_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_bytes_without_log(out_dir):
    out = {}
    for p in sorted(Path(out_dir).rglob("*")):
        if p.is_file() and p.name != "log.txt":
            out[str(p.relative_to(out_dir))] = p.read_bytes()
    return out


class TestSynth:
    def test_writes_loadable_dataset(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "data")]) == 0
        ds = load_dataset(tmp_path / "data")
        assert ds.n == 16 and ds.v == 6 and ds.t == 24

    def test_bad_module_name_exits_2(self, tmp_path, capsys):
        raw = base_config(tmp_path)
        raw["dataset"]["synth"]["planted"] = "missing"
        cfg = write_config(tmp_path, raw)
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "data")]) == 2
        assert "planted" in capsys.readouterr().err

    def test_fixed_seed_reproduces_directory_bytes(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        main(["synth", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["synth", "--config", cfg, "--out", str(tmp_path / "b")])
        assert read_bytes_without_log(tmp_path / "a") == read_bytes_without_log(tmp_path / "b")


class TestTrain:
    def test_emits_artifact_files(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        out = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(out)]) == 0
        for name in ("checkpoint.json", "history.csv", "metrics.json", "run.json", "log.txt"):
            assert (out / name).exists(), name
        history = (out / "history.csv").read_text().strip().split("\n")
        assert len(history) == 1 + 2  # header + one row per epoch
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics["test"]) == {"auroc", "accuracy", "ce", "intra", "inter", "sparsity"}

    def test_epochs_override(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        out = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(out), "--epochs", "4"]) == 0
        history = (out / "history.csv").read_text().strip().split("\n")
        assert len(history) == 1 + 4

    def test_rerun_is_byte_identical_outside_log(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        main(["train", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5"])
        main(["train", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"])
        assert read_bytes_without_log(tmp_path / "a") == read_bytes_without_log(tmp_path / "b")

    def test_pipeline_from_config(self, tmp_path):
        raw = base_config(tmp_path, pipeline="seq-gru")
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text())["pipeline"] == "seq-gru"


class TestConfigValidation:
    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 2
        assert "does not exist" in capsys.readouterr().err

    def test_malformed_json_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{oops")
        assert main(["train", "--config", str(path)]) == 2

    def test_unknown_key_exits_2_without_partial_output(self, tmp_path, capsys):
        raw = base_config(tmp_path)
        raw["trian"] = raw.pop("train")
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "out"
        assert main(["train", "--config", cfg, "--out", str(out)]) == 2
        assert not out.exists()
        assert "unknown keys" in capsys.readouterr().err

    def test_bad_pipeline_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path, pipeline="gnn-magic"))
        assert main(["train", "--config", cfg]) == 2

    def test_both_path_and_synth_exits_2(self, tmp_path):
        raw = base_config(tmp_path)
        raw["dataset"]["path"] = str(tmp_path)
        cfg = write_config(tmp_path, raw)
        assert main(["train", "--config", cfg]) == 2

    def test_negative_lr_exits_2(self, tmp_path):
        raw = base_config(tmp_path)
        raw["train"]["lr"] = -1.0
        cfg = write_config(tmp_path, raw)
        assert main(["train", "--config", cfg]) == 2

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["not-a-command"])
        assert exc.value.code == 2


class TestHarnessCommands:
    def test_compare_emits_six_pipelines(self, tmp_path):
        raw = base_config(tmp_path)
        raw["dataset"]["synth"]["t"] = 40  # cnn branch needs t >= window + 28
        raw["train"]["epochs"] = 1
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "cmp"
        assert main(["compare", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().split("\n")
        assert lines[0] == "pipeline,auroc_mean,auroc_std,accuracy_mean,accuracy_std"
        assert len(lines) == 1 + 6
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == [
            "fbnetgen-cnn",
            "fbnetgen-gru",
            "gnn-uniform",
            "gnn-pearson",
            "seq-cnn",
            "seq-gru",
        ]

    def test_ablate_emits_four_variants(self, tmp_path):
        raw = base_config(tmp_path, seeds=[0, 1])
        raw["train"]["epochs"] = 1
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "abl"
        assert main(["ablate", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "ablation.csv").read_text().strip().split("\n")
        assert lines[0] == "variant,seed0,seed1,mean,std"
        assert [line.split(",")[0] for line in lines[1:]] == ["All", "CE", "CE+GL", "CE+SL"]

    def test_sweep_row_count_matches_grid(self, tmp_path):
        raw = base_config(tmp_path, sweep={"windows": [4, 8], "dims": [2, 4]})
        raw["train"]["epochs"] = 1
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert lines[0] == "window,dim,auroc,accuracy"
        assert len(lines) == 1 + 4

    def test_sweep_without_grid_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        assert main(["sweep", "--config", cfg]) == 2

    def test_ablate_rerun_is_byte_identical(self, tmp_path):
        raw = base_config(tmp_path)
        raw["train"]["epochs"] = 1
        cfg = write_config(tmp_path, raw)
        main(["ablate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["ablate", "--config", cfg, "--out", str(tmp_path / "b")])
        assert read_bytes_without_log(tmp_path / "a") == read_bytes_without_log(tmp_path / "b")

    def test_sweep_rerun_is_byte_identical(self, tmp_path):
        raw = base_config(tmp_path, sweep={"windows": [8], "dims": [4]})
        raw["train"]["epochs"] = 1
        cfg = write_config(tmp_path, raw)
        main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["sweep", "--config", cfg, "--out", str(tmp_path / "b")])
        assert read_bytes_without_log(tmp_path / "a") == read_bytes_without_log(tmp_path / "b")


class TestInterpretCommand:
    def test_emits_analysis_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        run = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(run)]) == 0
        out = tmp_path / "interp"
        code = main([
            "interpret", "--config", cfg, "--out", str(out),
            "--checkpoint", str(run / "checkpoint.json"),
        ])
        assert code == 0
        for name in (
            "mean_graph_all.csv",
            "mean_graph_all.pgm",
            "mean_graph_class0.csv",
            "mean_graph_class1.csv",
            "edges_significant.csv",
            "module_scores.csv",
        ):
            assert (out / name).exists(), name
        scores = (out / "module_scores.csv").read_text().strip().split("\n")
        assert scores[0] == "module,score"
        assert {line.split(",")[0] for line in scores[1:]} == {"m1", "m2"}
        mean_lines = (out / "mean_graph_all.csv").read_text().strip().split("\n")
        assert len(mean_lines) == 6

    def test_missing_checkpoint_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path))
        assert main(["interpret", "--config", cfg, "--out", str(tmp_path / "x")]) == 2

    def test_non_generating_checkpoint_fails_cleanly(self, tmp_path):
        raw = base_config(tmp_path, pipeline="gnn-uniform")
        cfg = write_config(tmp_path, raw)
        run = tmp_path / "run"
        assert main(["train", "--config", cfg, "--out", str(run)]) == 0
        code = main([
            "interpret", "--config", cfg, "--out", str(tmp_path / "x"),
            "--checkpoint", str(run / "checkpoint.json"),
        ])
        assert code == 1
