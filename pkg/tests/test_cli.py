import json

import pytest

from sharegnn.checkpoint import load_checkpoint
from sharegnn.cli import main

TRAIN = {"max_epochs": 15, "early_stop_patience": 15, "learning_rate": 0.1, "batch_size": 32}


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "rt2"
    assert main(["generate", "ring-transfer-2", "--count", "120", "--seed", "3", "--out", str(out)]) == 0
    return out


@pytest.fixture
def config(tmp_path, data_dir):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "ring_transfer_2", "dataset": {"generator": None, "params": None,
                                                                         "seed": None, "path": "rt2"},
                                "train": TRAIN, "protocol": {"kind": "holdout", "folds": 5}}))
    return path


@pytest.fixture(autouse=True)
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SHAREGNN_CACHE", str(tmp_path / "cache"))


class TestGenerate:
    def test_writes_tu_files(self, data_dir):
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["generator"] == "ring-transfer-2"
        assert any(data_dir.glob("*_A.txt"))

    def test_refuses_overwrite(self, data_dir, capsys):
        assert main(["generate", "ring-transfer-2", "--count", "8", "--out", str(data_dir)]) == 2
        assert "--force" in capsys.readouterr().err
        assert main(["generate", "ring-transfer-2", "--count", "8", "--out", str(data_dir), "--force"]) == 0

    def test_bad_arguments(self, tmp_path):
        assert main(["generate", "csl", "--size", "10", "--out", str(tmp_path / "x")]) == 2
        assert main(["generate", "ring-transfer-2", "--count", "3", "--out", str(tmp_path / "y")]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["generate", "ring-transfer-2"])
        assert exc.value.code == 2


class TestPipeline:
    def test_preprocess_then_cache_hit(self, config, capsys):
        assert main(["preprocess", "--config", str(config)]) == 0
        first = json.loads(capsys.readouterr().out)
        assert main(["preprocess", "--config", str(config)]) == 0
        second = json.loads(capsys.readouterr().out)
        assert not any(s["cache_hit"] for s in first["stages"])
        assert all(s["cache_hit"] for s in second["stages"])

    def test_train_outputs_and_determinism(self, config, tmp_path):
        a, b = tmp_path / "run_a", tmp_path / "run_b"
        assert main(["train", "--config", str(config), "--out", str(a)]) == 0
        assert main(["train", "--config", str(config), "--out", str(b)]) == 0
        for name in ("config.json", "metrics.csv", "timing.csv", "checkpoint.bin", "report.json"):
            assert (a / name).is_file()
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        report = json.loads((a / "report.json").read_text())
        assert report["num_parameters"] == sum(report["parameters_by_kind"].values())
        header, _ = load_checkpoint(a / "checkpoint.bin")
        assert header["best_epoch"] == report["best_epoch"]
        assert main(["train", "--config", str(config), "--out", str(a)]) == 2

    def test_inspect_weights(self, config, tmp_path, capsys):
        run = tmp_path / "run"
        assert main(["train", "--config", str(config), "--out", str(run)]) == 0
        capsys.readouterr()
        assert main(["inspect-weights", str(run), "--graph", "0", "--top-k", "2"]) == 0
        out = json.loads(capsys.readouterr().out)
        table = out["message_weights"]["enc0.h0.msg"]
        assert len(table["top"]) == 2
        assert out["graph"]["num_nodes"] == 16 and len(out["graph"]["heads"][0]["entries"]) == 16
        assert main(["inspect-weights", str(run), "--graph", "999"]) == 3
        assert main(["inspect-weights", str(tmp_path / "missing")]) == 3

    def test_evaluate(self, config, tmp_path, capsys):
        out = tmp_path / "eval"
        assert main(["evaluate", "--config", str(config), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["num_splits"] == 1 and report["metric"] == "accuracy"
        assert "accuracy" in capsys.readouterr().out

    def test_stats(self, data_dir, capsys):
        assert main(["stats", "--data", str(data_dir)]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["num_graphs"] == 120

    def test_presets(self, capsys):
        assert main(["presets"]) == 0
        assert "ring_transfer_2" in capsys.readouterr().out.split()
        assert main(["presets", "csl"]) == 0
        assert json.loads(capsys.readouterr().out)["dataset"]["generator"] == "csl"
        assert main(["presets", "nope"]) == 2


class TestErrors:
    def test_invalid_activation(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"preset": "ring_transfer_2",
                                    "model": {"decoder": [{"labeling": "raw", "m": 2, "activation": "swish"}]}}))
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) == 2

    def test_missing_data(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"preset": "molecules_grid", "dataset": {"path": "absent"}, "grid": None}))
        assert main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) == 3

    def test_grid_refused_by_train(self, tmp_path):
        assert main(["train", "--config", "molecules_grid", "--out", str(tmp_path / "r")]) == 2
