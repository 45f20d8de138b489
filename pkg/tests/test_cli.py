import hashlib
import json

import numpy as np
import pytest

from intentforge import cli
from intentforge.checkpoint import load_checkpoint, save_checkpoint
from intentforge.data.split import class_weights
from intentforge.data.store import load_split
from intentforge.engine import predict_proba, weighted_bce, zero_params
from intentforge.errors import DivergenceError
from intentforge.trainer import Checkpoint, EpochStats, TrainConfig

SMALL = ["--set", "generator.n_users=600"]
QUICK = ["--set", "train.max_epochs=3"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("generate", "--seed", 4, *SMALL, "--out", root / "data") == 0
    assert run("prepare", root / "data" / "events.csv", "--seed", 4, "--out", root / "split") == 0
    assert run("train", root / "split", "--seed", 4, *QUICK, "--out", root / "run") == 0
    return root


def test_generate_defaults(tmp_path, capsys):
    assert run("generate", "--out", tmp_path) == 0
    assert (tmp_path / "events.csv").exists() and (tmp_path / "truth.json").exists()
    assert "positive_rate=0.16" in capsys.readouterr().out


def test_generate_is_reproducible(tmp_path, workspace):
    assert run("generate", "--seed", 4, *SMALL, "--out", tmp_path) == 0
    for name in ("events.csv", "truth.json"):
        assert digest(tmp_path / name) == digest(workspace / "data" / name)


def test_bad_config_names_the_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"generator": {"n_userz": 5}}))
    assert run("generate", "--config", cfg, "--out", tmp_path) == 1
    assert "generator.n_userz" in capsys.readouterr().err
    cfg.write_text('{"train": ')
    assert run("generate", "--config", cfg, "--out", tmp_path) == 1
    assert "invalid JSON" in capsys.readouterr().err
    assert run("generate", "--set", "bogus.x=1", "--out", tmp_path) == 1
    assert "bogus" in capsys.readouterr().err


def test_prepare_reports_balance_and_is_deterministic(tmp_path, workspace, capsys):
    assert run("prepare", workspace / "data" / "events.csv", "--seed", 4, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "state_size=" in out and "positive_rate=" in out
    for name in ("train.iffm", "validation.iffm", "test.iffm", "schema.json", "split.json", "report.json"):
        assert digest(tmp_path / name) == digest(workspace / "split" / name)


def test_prepare_missing_input(tmp_path, capsys):
    missing = tmp_path / "absent.csv"
    assert run("prepare", missing, "--out", tmp_path) == 1
    assert str(missing) in capsys.readouterr().err


def test_train_outputs(workspace, capsys):
    history = (workspace / "run" / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,train_loss,val_loss,epsilon,seconds"
    assert len(history) == 1 + 3
    split = load_split(workspace / "split")
    ckpt = load_checkpoint(workspace / "run" / "model.ifck")
    val = weighted_bce(predict_proba(ckpt.params, split.validation.model_input()), split.validation.labels,
                       class_weights(split.train.labels))
    assert abs(val - ckpt.val_loss) <= 1e-12


def test_train_banner_uses_defaults(workspace, capsys, monkeypatch):
    seen = {}

    def fake_train(config, split):
        seen["config"] = config
        raise DivergenceError(1, 7, float("nan"))

    monkeypatch.setattr(cli, "train", fake_train)
    assert run("train", workspace / "split", "--out", workspace / "div") == 1
    captured = capsys.readouterr()
    assert "lr=0.001 batch=32 epochs=50 patience=10" in captured.out
    assert "epoch 1, batch 7" in captured.err
    assert (workspace / "div" / "history.csv.partial").exists()
    assert not (workspace / "div" / "history.csv").exists()
    assert seen["config"] == TrainConfig(seed=0)


def test_divergence_keeps_completed_epochs(workspace, monkeypatch):
    def fake_train(config, split):
        err = DivergenceError(1, 0, float("inf"))
        err.history = [EpochStats(0, 0.5, 0.4, 1.0, 0.1)]
        raise err

    monkeypatch.setattr(cli, "train", fake_train)
    assert run("train", workspace / "split", "--out", workspace / "div2") == 1
    assert len((workspace / "div2" / "history.csv.partial").read_text().splitlines()) == 2


def test_evaluate_sweep_compare(workspace, capsys):
    ckpt, split, out = workspace / "run" / "model.ifck", workspace / "split", workspace / "reports"
    assert run("evaluate", ckpt, split, "--out", out) == 0
    text = capsys.readouterr().out
    for needle in ("0 (No Purchase)", "1 (Purchase)", "accuracy =", "Predicted Purchase", "auc_roc ="):
        assert needle in text
    assert run("sweep", ckpt, split, "--out", out) == 0
    rows = (out / "sweep.csv").read_text().splitlines()[1:]
    assert sorted({r.split(",")[0] for r in rows}) == ["0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]
    assert len((out / "sweep.txt").read_text().splitlines()) == 1 + 14
    assert run("train", split, "--seed", 4, "--baseline", "logreg", "--set", "baselines.epochs=50",
               "--out", workspace / "run") == 0
    assert run("train", split, "--seed", 4, "--baseline", "lstm", *QUICK, "--out", workspace / "run") == 0
    assert run("compare", ckpt, split, "--logreg", workspace / "run" / "logreg.ifck",
               "--lstm", workspace / "run" / "lstm.ifck", "--out", out) == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "Model / Threshold,Accuracy,Precision,Recall,F1-Score,AUC-ROC"
    assert len(lines) == 9
    assert run("evaluate", workspace / "run" / "logreg.ifck", split, "--threshold", 0.3, "--out", out) == 0


def test_reports_are_reproducible(workspace, tmp_path):
    ckpt, split = workspace / "run" / "model.ifck", workspace / "split"
    assert run("train", split, "--seed", 4, *QUICK, "--out", tmp_path) == 0
    assert digest(tmp_path / "model.ifck") == digest(ckpt)
    for name in ("a", "b"):
        assert run("sweep", ckpt, split, "--out", tmp_path / name) == 0
    assert digest(tmp_path / "a" / "sweep.csv") == digest(tmp_path / "b" / "sweep.csv")


def test_predict_with_zero_params(workspace, tmp_path):
    split = load_split(workspace / "split")
    zero = Checkpoint(zero_params(split.schema.state_size), split.schema.digest, TrainConfig(), 0, 0.0,
                      split.schema.to_dict())
    save_checkpoint(tmp_path / "zero.ifck", zero)
    assert run("predict", tmp_path / "zero.ifck", workspace / "data" / "events.csv", "--out", tmp_path) == 0
    lines = (tmp_path / "predictions.csv").read_text().splitlines()
    assert lines[0] == "session_id,probability"
    assert {line.split(",")[1] for line in lines[1:]} == {"0.5"}
    assert run("predict", workspace / "run" / "model.ifck", workspace / "data" / "events.csv",
               "--out", tmp_path / "real") == 0
    probs = np.array([float(x.split(",")[1]) for x in (tmp_path / "real" / "predictions.csv").read_text().splitlines()[1:]])
    assert np.all((probs > 0) & (probs < 1))


def test_digest_mismatch_is_rejected(workspace, tmp_path, capsys):
    assert run("generate", "--seed", 5, *SMALL, "--out", tmp_path / "d") == 0
    assert run("prepare", tmp_path / "d" / "events.csv", "--seed", 5, "--out", tmp_path / "s") == 0
    capsys.readouterr()
    assert run("evaluate", workspace / "run" / "model.ifck", tmp_path / "s", "--out", tmp_path) == 1
    assert "schema" in capsys.readouterr().err


def test_log_level_is_validated(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("INTENTFORGE_LOG", "loud")
    assert run("generate", *SMALL, "--out", tmp_path) == 1
    assert "INTENTFORGE_LOG" in capsys.readouterr().err
