"""Acceptance criteria. Each test records one PASS/FAIL line (also shown in
the pytest terminal summary) before asserting.

Run just this suite with ``pytest tests/test_acceptance.py -v``. Criterion 10
needs a real event log: set ``INTENTFORGE_REAL_CSV`` to its path.
"""
import hashlib
import os
import time

import numpy as np
import pytest

from intentforge import cli
from intentforge.baselines import logreg_loss_and_grad
from intentforge.data import prepare_file
from intentforge.engine import (
    BatchNormParams,
    DenseParams,
    LstmParams,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    init_params,
    lstm_backward,
    lstm_forward,
    model_backward,
    model_forward,
    predict_proba,
    weighted_bce,
)
from intentforge.engine.gradcheck import numeric_gradient, relative_error
from intentforge.metrics import ConfusionMatrix, confusion, report, roc_auc, sweep
from intentforge.synth import GeneratorConfig, bayes_auc, generate
from intentforge.trainer import TrainConfig, epsilon_schedule, train

RESULTS = []

GRAD_TOL = 1e-4
GRAD_TRIALS = 20
AUC_TOL = 1e-9


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- 1 ------------------------------------------------------------------------

def _lstm_trial(rng):
    I, H, T, B = 3, 3, int(rng.integers(1, 4)), 3
    p = LstmParams(rng.normal(0, 0.5, (4 * H, I)), rng.normal(0, 0.5, (4 * H, H)), rng.normal(0, 0.5, 4 * H))
    xs, up = rng.normal(size=(T, B, I)), rng.normal(size=(T, B, H))
    loss = lambda: float(np.sum(lstm_forward(p, xs)[0] * up))
    grads, dx = lstm_backward(lstm_forward(p, xs, training=True)[3], up)
    errs = [relative_error(grads[k], numeric_gradient(loss, getattr(p, k))) for k in grads]
    return max(errs + [relative_error(dx, numeric_gradient(loss, xs))])


def _bn_trial(rng):
    p = BatchNormParams(rng.normal(1, 0.3, 3), rng.normal(0, 0.3, 3), np.zeros(3), np.ones(3))
    x, up = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    loss = lambda: float(np.sum(batchnorm_forward(p, x, training=True)[0] * up))
    gx, gg, gb = batchnorm_backward(batchnorm_forward(p, x, training=True)[1], up)
    return max(relative_error(gx, numeric_gradient(loss, x)), relative_error(gg, numeric_gradient(loss, p.gamma)),
               relative_error(gb, numeric_gradient(loss, p.beta)))


def _dense_trial(rng):
    p = DenseParams(rng.normal(size=(2, 4)), rng.normal(size=2))
    x, up = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    loss = lambda: float(np.sum(dense_forward(p, x) * up))
    gx, gw, gb = dense_backward(p, x, up)
    return max(relative_error(gx, numeric_gradient(loss, x)), relative_error(gw, numeric_gradient(loss, p.w)),
               relative_error(gb, numeric_gradient(loss, p.b)))


def _model_trial(rng):
    seed = int(rng.integers(1 << 31))
    p = init_params(4, seed, dropout_rate=0.0)
    p = p.replace({k: v + rng.normal(0, 0.1, v.shape) for k, v in p.learnable().items()})
    x = rng.normal(size=(4, int(rng.integers(1, 3)), 4))
    y, w = np.array([1.0, 0.0, 1.0, 0.0]), (0.6, 3.0)
    loss = lambda: weighted_bce(model_forward(p, x, training=True)[0], y, w)
    probs, cache = model_forward(p, x, training=True)
    grads = model_backward(p, cache, probs, y, w)
    errs = []
    for name, arr in p.learnable().items():
        idx = rng.choice(arr.size, size=min(6, arr.size), replace=False)
        errs.append(relative_error(grads[name], numeric_gradient(loss, arr, indices=idx)))
    return max(errs)


def _logreg_trial(rng):
    x, y = rng.normal(size=(10, 5)), (rng.random(10) < 0.5).astype(float)
    w, b = rng.normal(size=5), np.array([rng.normal()])
    loss = lambda: logreg_loss_and_grad(w, b[0], x, y, (0.7, 1.8), 1e-3)[0]
    _, dw, db = logreg_loss_and_grad(w, b[0], x, y, (0.7, 1.8), 1e-3)
    return max(relative_error(dw, numeric_gradient(loss, w)), relative_error([db], numeric_gradient(loss, b)))


def test_criterion_1_gradient_gate():
    started = time.perf_counter()
    rng = np.random.default_rng(20)
    worst = {}
    for name, trial in (("lstm", _lstm_trial), ("batchnorm", _bn_trial), ("dense", _dense_trial),
                        ("model", _model_trial), ("logreg", _logreg_trial)):
        worst[name] = max(trial(rng) for _ in range(GRAD_TRIALS))
    seconds = time.perf_counter() - started
    ok = all(e < GRAD_TOL for e in worst.values()) and seconds < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(1, "gradient gate", ok, f"{GRAD_TRIALS} trials each, max rel err {detail}, {seconds:.1f}s")


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_metrics_fixture():
    rep = report(ConfusionMatrix(tn=146479, fp=994, fn=20921, tp=8640))
    ok = (abs(rep.accuracy - 0.8762) <= 1e-4 and abs(rep[1].precision - 0.897) <= 1e-3
          and abs(rep[1].recall - 0.292) <= 1e-3)
    record(2, "metrics fixture regression", ok,
           f"accuracy {rep.accuracy:.4f}, precision1 {rep[1].precision:.4f}, recall1 {rep[1].recall:.4f}")


# -- 3 ------------------------------------------------------------------------

def _pairwise_auc(p, y):
    pos, neg = p[y], p[~y]
    diff = pos[:, None] - neg[None, :]
    return (np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)) / (pos.size * neg.size)


def test_criterion_3_auc_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 1001))
        levels = int(rng.integers(2, 12)) if k % 2 else 0  # odd instances: heavy ties
        p = rng.integers(0, levels, n) / levels if levels else rng.random(n)
        y = rng.random(n) < rng.uniform(0.05, 0.95)
        y[0], y[1] = True, False
        worst = max(worst, abs(roc_auc(p, y).auc - _pairwise_auc(p, y)))
    seconds = time.perf_counter() - started
    record(3, "AUC oracle", worst <= AUC_TOL and seconds < 60,
           f"100 instances, max |diff| {worst:.1e}, {seconds:.1f}s")


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_sweep_properties():
    rng = np.random.default_rng(4)
    ok, rows = True, 0
    for _ in range(20):
        p = rng.random(2000) ** rng.uniform(0.3, 3)
        y = rng.random(2000) < p
        sw = sweep(p, y)
        rows = len(sw.thresholds)
        series = {
            "predicted_positive": [m.predicted_positive for m in sw.matrices],
            "fp": [m.fp for m in sw.matrices], "tp": [m.tp for m in sw.matrices],
            "recall1": [r[1].recall for r in sw.reports],
        }
        ok &= all(all(b <= a for a, b in zip(v, v[1:])) for v in series.values())
        ok &= all(all(b >= a for a, b in zip(v, v[1:])) for v in ([m.tn for m in sw.matrices],
                                                                   [m.fn for m in sw.matrices]))
        ok &= sw.thresholds == (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    record(4, "threshold sweep properties", ok and rows == 7, f"20 score sets, {rows} threshold rows")


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_end_to_end():
    started = time.perf_counter()
    gen = generate(GeneratorConfig(n_users=10_000, target_rate=0.1662, seed=2024))
    split = prepare_file(gen.csv, seed=2024)
    ckpt, history = train(TrainConfig(max_epochs=15, seed=2024), split)
    auc = roc_auc(predict_proba(ckpt.params, split.test.model_input()), split.test.labels).auc
    ceiling = bayes_auc(gen.truth)
    seconds = time.perf_counter() - started
    ok = auc >= 0.80 and auc >= ceiling - 0.10 and seconds < 600
    record(5, "end-to-end synthetic run", ok,
           f"{len(gen.truth)} sessions, rate {gen.positive_rate:.4f}, test AUC {auc:.4f}, "
           f"bayes AUC {ceiling:.4f}, {len(history)} epochs, {seconds:.0f}s")


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_class_weighting():
    pairs = []
    for seed in (11, 12, 13):
        split = prepare_file(generate(GeneratorConfig(n_users=3000, target_rate=0.15, seed=seed)).csv, seed=seed)
        recalls = []
        for weighted in (True, False):
            ckpt, _ = train(TrainConfig(max_epochs=5, patience=5, seed=seed, class_weighting=weighted), split)
            probs = predict_proba(ckpt.params, split.test.model_input())
            recalls.append(report(confusion(probs, split.test.labels, 0.5))[1].recall)
        pairs.append(tuple(recalls))
    ok = all(w > u for w, u in pairs)
    record(6, "class weighting raises recall", ok,
           "; ".join(f"weighted {w:.3f} vs unweighted {u:.3f}" for w, u in pairs))


# -- 7 ------------------------------------------------------------------------

def _pipeline(root):
    steps = [
        ["generate", "--seed", "7", "--set", "generator.n_users=1200", "--out", root / "data"],
        ["prepare", root / "data" / "events.csv", "--seed", "7", "--out", root / "split"],
        ["train", root / "split", "--seed", "7", "--set", "train.max_epochs=3", "--out", root / "run"],
        ["evaluate", root / "run" / "model.ifck", root / "split", "--out", root / "run"],
        ["sweep", root / "run" / "model.ifck", root / "split", "--out", root / "run"],
    ]
    for argv in steps:
        assert cli.main([str(a) for a in argv]) == 0
    names = ["data/events.csv", "data/truth.json", "split/train.iffm", "split/validation.iffm",
             "split/test.iffm", "split/schema.json", "run/model.ifck", "run/report.csv", "run/report.txt",
             "run/roc.csv", "run/sweep.csv", "run/sweep.txt"]
    return {n: hashlib.sha256((root / n).read_bytes()).hexdigest() for n in names}


def test_criterion_7_determinism(tmp_path):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    differing = [n for n in a if a[n] != b[n]]
    record(7, "determinism", not differing,
           f"{len(a)} artifacts compared" + (f", differing: {differing}" if differing else ", all identical"))


# -- 8 ------------------------------------------------------------------------

def test_criterion_8_leakage(tmp_path):
    csv_bytes = generate(GeneratorConfig(n_users=1500, seed=8)).csv
    problems = []
    for mode in ("flat", "sequence"):
        split = prepare_file(csv_bytes, seed=8, mode=mode)
        parts = split.parts()
        users = {k: set(v.user_ids) for k, v in parts.items()}
        if users["train"] & users["validation"] or users["train"] & users["test"] or users["validation"] & users["test"]:
            problems.append(f"{mode}: users shared across parts")
        purchase_col = split.schema.feature_names(mode).index(
            ("event_fraction" if mode == "flat" else "event_type") + "=purchase")
        groups = split.schema.onehot_groups(mode)
        for name, fm in parts.items():
            if np.any(fm.values[:, purchase_col] != 0):
                problems.append(f"{mode}/{name}: purchase indicator set")
            for g in groups:
                sums = fm.values[:, g].sum(axis=1)
                # sequence rows are true one-hots; flat rows hold fractions summing to 1 up to rounding
                bad = np.any(sums != 1.0) if mode == "sequence" else np.any(np.abs(sums - 1.0) > 1e-12)
                if bad:
                    problems.append(f"{mode}/{name}: group {g} does not sum to 1")
    record(8, "pipeline leakage suite", not problems, "; ".join(problems) or "both modes clean")


# -- 9 ------------------------------------------------------------------------

def test_criterion_9_epsilon_schedule():
    cfg = TrainConfig()
    eps = [epsilon_schedule(e, cfg) for e in range(cfg.max_epochs)]
    ok = eps[0] == 1.0 and eps[-1] == 0.01 and all(b <= a for a, b in zip(eps, eps[1:]))
    record(9, "epsilon schedule", ok, f"eps(0)={eps[0]}, eps({cfg.max_epochs - 1})={eps[-1]}")


# -- 10 (optional, not gating) ---------------------------------------------------

@pytest.mark.skipif(not os.environ.get("INTENTFORGE_REAL_CSV"), reason="INTENTFORGE_REAL_CSV not set")
def test_criterion_10_real_data_balance():
    split = prepare_file(os.environ["INTENTFORGE_REAL_CSV"], seed=0)
    labels = np.concatenate([fm.labels for fm in split.parts().values()])
    rate = float(labels.mean())
    record(10, "real-data class balance (optional)", abs(rate - 0.1662) <= 0.01, f"positive rate {rate:.4f}")
