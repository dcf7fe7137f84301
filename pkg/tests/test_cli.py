import json

import pytest

from gnnfdia.cli import main
from gnnfdia.scenario import load_dataset


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({"train": {"max_epochs": 3, "patience": 2}, "attack": {"epochs": 100}}))
    assert main(["generate-data", "--case", "ieee14", "--T", "60", "--seed", "1", "--out", str(root / "h")]) == 0
    assert main(["generate-attacks", "--data", str(root / "h"), "--preset", "balanced", "--tau-freq", "0",
                 "--config", str(cfg), "--seed", "2", "--out", str(root / "a")]) == 0
    assert main(["train", "--data", str(root / "a"), "--config", str(cfg), "--out", str(root / "run")]) == 0
    return root, cfg


def test_generate_data_outputs(pipeline):
    root, _ = pipeline
    for name in ("meta.json", "case.json", "Z.csv", "X.csv"):
        assert (root / "h" / name).exists()
    ds = load_dataset(root / "h")
    assert ds.Z.shape == (60, 108) and ds.meta["seed"] == 1


def test_generate_attacks_outputs(pipeline):
    root, _ = pipeline
    ds = load_dataset(root / "a")
    assert ds.Y is not None and ds.Y.sum() == ds.attacks["summary"]["accepted"] > 0
    assert ds.meta["attack"]["epochs"] == 100


def test_train_outputs(pipeline):
    root, _ = pipeline
    run = root / "run"
    metrics = json.loads((run / "metrics.json").read_text())
    assert {"dr", "fa", "f1", "counts", "split_sizes", "seed", "config_hash"} <= set(metrics)
    assert metrics["split_sizes"] == {"train": 36, "val": 12, "test": 12}
    assert metrics["n_params"] == 7073
    lines = (run / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and 2 <= len(lines) <= 4
    manifest = json.loads((run / "model.json").read_text())
    assert manifest["model"] == "gnn" and manifest["train"]["max_epochs"] == 3


def test_evaluate(pipeline):
    root, cfg = pipeline
    out = root / "eval"
    assert main(["evaluate", "--data", str(root / "a"), "--checkpoint", str(root / "run" / "model"),
                 "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads((out / "metrics.json").read_text())
    train_doc = json.loads((root / "run" / "metrics.json").read_text())
    assert doc["model"]["counts"] == train_doc["counts"]
    assert doc["bdd"]["tau_bdd"] == 3.0 and doc["bdd"]["denominator"] == "sqrt"


def test_evaluate_bdd_only_paper_denominator(pipeline):
    root, _ = pipeline
    out = root / "eval_paper"
    assert main(["evaluate", "--data", str(root / "a"), "--residual-denominator", "paper",
                 "--tau-bdd", "1.05", "--out", str(out)]) == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert "model" not in doc and doc["bdd"]["tau_bdd"] == 1.05


def test_mlp_training(pipeline):
    root, cfg = pipeline
    assert main(["train", "--data", str(root / "a"), "--model", "mlp", "--config", str(cfg),
                 "--seed", "4", "--out", str(root / "mlp")]) == 0
    doc = json.loads((root / "mlp" / "metrics.json").read_text())
    assert doc["model"] == "mlp" and doc["seed"] == 4


def test_cli_determinism(pipeline, tmp_path):
    root, _ = pipeline
    assert main(["generate-data", "--case", "ieee14", "--T", "60", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "Z.csv").read_bytes() == (root / "h" / "Z.csv").read_bytes()


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"T": 3, "seed": 5}))
    assert main(["generate-data", "--config", str(cfg), "--T", "4", "--out", str(tmp_path / "d")]) == 0
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    assert meta["T"] == 4 and meta["seed"] == 5


@pytest.mark.parametrize("argv", [
    ["generate-data", "--case", "ieee15", "--T", "2"],
    ["generate-data", "--T", "0"],
    ["generate-data", "--profile", "missing.csv", "--T", "2"],
    ["generate-attacks", "--data", "nowhere"],
    ["train"],
    ["generate-data", "--preset", "x"],
])
def test_bad_input_exit_code(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "o")]) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["generate-data", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["generate-data", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"scenario": {"k": -1}}))
    assert main(["generate-data", "--config", str(bad), "--T", "2", "--out", str(tmp_path / "o")]) == 2


def test_train_on_unlabeled_data(pipeline):
    root, _ = pipeline
    assert main(["train", "--data", str(root / "h")]) == 2


def test_numeric_failure_exit_code(tmp_path):
    case = {"base_mva": 100, "buses": [{"id": 1, "kind": "slack", "v_set": 1.0},
                                       {"id": 2, "kind": "pq", "p_load": 5000.0}],
            "branches": [{"from": 1, "to": 2, "x": 0.1}]}
    path = tmp_path / "heavy.json"
    path.write_text(json.dumps(case))
    assert main(["generate-data", "--case", str(path), "--T", "2", "--out", str(tmp_path / "o")]) == 3


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "gnnfdia", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "generate-data" in out.stdout
