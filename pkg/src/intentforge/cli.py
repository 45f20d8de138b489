"""``intentforge`` command line.

    intentforge generate                      -> events.csv, truth.json
    intentforge prepare EVENTS.csv            -> {train,validation,test}.iffm, schema.json, split.json, report.json
    intentforge train SPLIT_DIR [--baseline]  -> model.ifck (lstm.ifck, logreg.ifck), history.csv
    intentforge evaluate CKPT SPLIT_DIR       -> report.csv, report.txt, roc.csv
    intentforge sweep CKPT SPLIT_DIR          -> sweep.csv, sweep.txt
    intentforge compare CKPT SPLIT_DIR        -> compare.csv, compare.txt
    intentforge predict CKPT EVENTS.csv       -> predictions.csv

Every command accepts ``--config FILE``, ``--seed N``, ``--out DIR`` and any
number of ``--set section.key=value`` overrides. Logging verbosity comes from
``INTENTFORGE_LOG`` (error, warn, info, debug).
"""
import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from intentforge import container
from intentforge.baselines import LogRegParams, compare, predict_logreg, train_logreg
from intentforge.checkpoint import checkpoint_schema, load_checkpoint, save_checkpoint
from intentforge.data import class_weights, featurize_sessions, parse_events, prepare_file, sessionize
from intentforge.data.events import truncate_at_purchase
from intentforge.data.features import DEFAULT_VOCAB_CAP, MODES
from intentforge.data.split import DEFAULT_FRACTIONS
from intentforge.data.store import load_split, save_split
from intentforge.engine import predict_proba
from intentforge.errors import ConfigError, DivergenceError, IncompatibleArtifactsError, IntentForgeError
from intentforge.metrics import DEFAULT_THRESHOLDS, confusion, format_report, report, report_csv, roc_auc, sweep
from intentforge.synth import GeneratorConfig, bayes_auc, generate
from intentforge.trainer import TrainConfig, history_csv, train

log = logging.getLogger("intentforge")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

DEFAULTS = {
    "seed": 0,
    "generator": {},
    "pipeline": {"fractions": list(DEFAULT_FRACTIONS), "vocab_cap": DEFAULT_VOCAB_CAP, "mode": "flat"},
    "train": {},
    "baselines": {"lr": 0.05, "epochs": 500, "l2": 1e-4},
    "evaluate": {"threshold": 0.5, "part": "test"},
    "thresholds": list(DEFAULT_THRESHOLDS),
}
BASELINE_FILES = {"none": "model.ifck", "lstm": "lstm.ifck", "logreg": "logreg.ifck"}


# -- configuration ---------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=(), seed=None):
    """Defaults, then the JSON file, then ``--set`` overrides, then ``--seed``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        for key, value in user.items():
            _assign(cfg, [key], value)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        _assign(cfg, key.split("."), _parse_value(value))
    if seed is not None:
        cfg["seed"] = seed
    if not isinstance(cfg["seed"], int):
        raise ConfigError(f"seed: must be an integer, got {cfg['seed']!r}")
    return cfg


def _assign(cfg, keys, value):
    if keys[0] not in DEFAULTS:
        raise ConfigError(f"{'.'.join(keys)}: unknown section {keys[0]!r}")
    if len(keys) == 1:
        if isinstance(DEFAULTS[keys[0]], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{keys[0]}: expected an object")
            for k, v in value.items():
                _assign(cfg, [keys[0], k], v)
        else:
            cfg[keys[0]] = value
        return
    if len(keys) != 2 or not isinstance(cfg[keys[0]], dict):
        raise ConfigError(f"{'.'.join(keys)}: unknown key")
    cfg[keys[0]][keys[1]] = value


def _section(cfg, name, allowed):
    section = dict(cfg[name])
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key")
    return section


def generator_config(cfg):
    section = dict(cfg["generator"])
    section["seed"] = cfg["seed"]
    return GeneratorConfig.from_dict(section)


def train_config(cfg, baseline="none"):
    section = dict(cfg["train"])
    section["seed"] = cfg["seed"]
    if baseline == "lstm":
        section.update(replay_enabled=False, exploration_enabled=False)
    if "patience" not in section and "max_epochs" in section:
        # the default patience would otherwise exceed a short epoch budget
        section["patience"] = min(TrainConfig.patience, section["max_epochs"])
    try:
        return TrainConfig.from_dict(section)
    except TypeError as exc:
        raise ConfigError(f"train: {exc}") from None


def pipeline_options(cfg):
    p = _section(cfg, "pipeline", ("fractions", "vocab_cap", "mode"))
    if p["mode"] not in MODES:
        raise ConfigError(f"pipeline.mode: must be one of {MODES}, got {p['mode']!r}")
    if not isinstance(p["vocab_cap"], int) or p["vocab_cap"] < 0:
        raise ConfigError("pipeline.vocab_cap: must be a non-negative integer")
    return p


# -- helpers ---------------------------------------------------------------

def _write_text(path, text):
    container.atomic_write(path, text.encode("utf-8"))


def _out_dir(args):
    d = Path(args.out)
    if d.exists() and not d.is_dir():
        raise ConfigError(f"--out {d} exists and is not a directory")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file or directory: {p}")
    return p


def _scores(artifact, matrix, max_len=None):
    if artifact.schema_digest != matrix.schema_digest:
        raise IncompatibleArtifactsError(
            f"checkpoint schema {artifact.schema_digest[:12]} does not match data schema {matrix.schema_digest[:12]}")
    if isinstance(artifact, LogRegParams):
        return predict_logreg(artifact, matrix.model_input())
    return predict_proba(artifact.params, matrix.model_input(max_len or artifact.config.max_sequence_length))


def _load_part(split_dir, part):
    split = load_split(_require(split_dir))
    if part not in split.parts():
        raise ConfigError(f"evaluate.part: must be one of {tuple(split.parts())}, got {part!r}")
    return split, split.parts()[part]


# -- commands ----------------------------------------------------------------

def cmd_generate(args, cfg):
    gen = generate(generator_config(cfg))
    csv_path, truth_path = gen.write(_out_dir(args))
    print(f"wrote {csv_path} and {truth_path}")
    print(f"sessions={len(gen.truth)} positive_rate={gen.positive_rate:.4f} "
          f"intercept={gen.intercept:.6f} bayes_auc={bayes_auc(gen.truth):.4f}")


def cmd_prepare(args, cfg):
    opts = pipeline_options(cfg)
    split = prepare_file(_require(args.events), fractions=opts["fractions"], seed=cfg["seed"],
                         vocab_cap=opts["vocab_cap"], mode=opts["mode"])
    out = _out_dir(args)
    save_split(out, split)
    print(f"wrote split to {out}")
    print(f"state_size={split.schema.state_size} mode={split.schema.mode} schema_digest={split.schema.digest}")
    for name, fm in split.parts().items():
        n = len(fm)
        pos = float(fm.labels.mean()) if n else 0.0
        print(f"{name:<10} sessions={n:<8d} positive_rate={pos:.4f} negative_rate={1 - pos:.4f}")
    rep = split.report
    print(f"excluded_empty_after_truncation={rep['excluded_empty_after_truncation']} "
          f"row_errors={len(rep.get('row_errors', []))}")


def cmd_train(args, cfg):
    split = load_split(_require(args.split))
    out = _out_dir(args)
    target = out / BASELINE_FILES[args.baseline]
    if args.baseline == "logreg":
        b = _section(cfg, "baselines", ("lr", "epochs", "l2"))
        if split.train.mode != "flat":
            raise ConfigError("logistic regression needs a flat-mode split (pipeline.mode=flat)")
        print(f"logreg lr={b['lr']:g} epochs={b['epochs']} l2={b['l2']:g}")
        params = train_logreg(split.train.model_input(), split.train.labels, lr=b["lr"], epochs=b["epochs"],
                              class_weights=class_weights(split.train.labels), l2=b["l2"], seed=cfg["seed"],
                              schema_digest=split.schema.digest)
        save_checkpoint(target, params, split.schema.to_dict(), b)
        print(f"wrote {target}")
        return
    tc = train_config(cfg, args.baseline)
    print(tc.banner())
    try:
        ckpt, history = train(tc, split)
    except DivergenceError as exc:
        _write_text(out / "history.csv.partial", history_csv(getattr(exc, "history", [])))
        raise
    save_checkpoint(target, ckpt)
    _write_text(out / "history.csv", history_csv(history))
    print(f"epochs_run={len(history)} best_epoch={ckpt.best_epoch} best_val_loss={ckpt.val_loss:.6f}")
    print(f"wrote {target} and {out / 'history.csv'}")


def cmd_evaluate(args, cfg):
    e = _section(cfg, "evaluate", ("threshold", "part"))
    threshold = e["threshold"] if args.threshold is None else args.threshold
    _, fm = _load_part(args.split, e["part"])
    probs = _scores(load_checkpoint(_require(args.checkpoint)), fm)
    cm = confusion(probs, fm.labels, threshold)
    rep = report(cm)
    curve = roc_auc(probs, fm.labels)
    text = format_report(cm, rep, threshold) + f"auc_roc = {curve.auc:.4f}\n"
    out = _out_dir(args)
    _write_text(out / "report.txt", text)
    _write_text(out / "report.csv", report_csv(rep, threshold))
    _write_text(out / "roc.csv", curve.to_csv())
    print(text, end="")


def cmd_sweep(args, cfg):
    _, fm = _load_part(args.split, cfg["evaluate"].get("part", "test"))
    probs = _scores(load_checkpoint(_require(args.checkpoint)), fm)
    result = sweep(probs, fm.labels, cfg["thresholds"])
    out = _out_dir(args)
    _write_text(out / "sweep.csv", result.to_csv())
    _write_text(out / "sweep.txt", result.to_text())
    print(result.to_text(), end="")


def cmd_compare(args, cfg):
    _, fm = _load_part(args.split, cfg["evaluate"].get("part", "test"))
    model = load_checkpoint(_require(args.checkpoint))
    logreg = load_checkpoint(_require(args.logreg)) if args.logreg else None
    lstm = load_checkpoint(_require(args.lstm)) if args.lstm else None
    table = compare(model, logreg, lstm, fm)
    out = _out_dir(args)
    _write_text(out / "compare.csv", table.to_csv())
    _write_text(out / "compare.txt", table.to_text())
    print(table.to_text(), end="")


def cmd_predict(args, cfg):
    ckpt_path = _require(args.checkpoint)
    schema = checkpoint_schema(ckpt_path)
    artifact = load_checkpoint(ckpt_path)
    events, errors = parse_events(_require(args.events))
    for err in errors:
        log.warning("line %d skipped: %s", err.line, err.message)
    sessions = [truncate_at_purchase(s) for s in sessionize(events)]
    kept = [s for s in sessions if not s.is_empty]
    if len(kept) < len(sessions):
        log.info("%d sessions have no events before a purchase and are not scored", len(sessions) - len(kept))
    fm = featurize_sessions(kept, schema)
    probs = _scores(artifact, fm) if kept else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["session_id", "probability"])
    w.writerows((sid, repr(float(p))) for sid, p in zip(fm.session_ids, probs))
    out = _out_dir(args) / "predictions.csv"
    _write_text(out, buf.getvalue())
    print(f"scored {len(kept)} sessions -> {out}")


# -- entry point -------------------------------------------------------------

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=default, help="overrides every seed in the config")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else ".", help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=argparse.SUPPRESS if suppress else [],
                        metavar="KEY=VALUE", help="config override, e.g. train.max_epochs=15")


def build_parser():
    parser = argparse.ArgumentParser(prog="intentforge", description="Session purchase-intent modelling.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    command("generate", cmd_generate, "write a synthetic event log with known propensities")
    p = command("prepare", cmd_prepare, "parse, sessionize, split and featurize an event log")
    p.add_argument("events", help="event CSV")
    p = command("train", cmd_train, "train a model or baseline on a prepared split")
    p.add_argument("split", help="directory written by prepare")
    p.add_argument("--baseline", choices=tuple(BASELINE_FILES), default="none",
                   help="lstm: replay and exploration off; logreg: logistic regression")
    p = command("evaluate", cmd_evaluate, "classification report and confusion matrix")
    p.add_argument("checkpoint")
    p.add_argument("split")
    p.add_argument("--threshold", type=float, default=None)
    p = command("sweep", cmd_sweep, "metrics across decision thresholds")
    p.add_argument("checkpoint")
    p.add_argument("split")
    p = command("compare", cmd_compare, "comparison table against baselines")
    p.add_argument("checkpoint")
    p.add_argument("split")
    p.add_argument("--logreg", help="logistic-regression checkpoint")
    p.add_argument("--lstm", help="plain LSTM checkpoint")
    p = command("predict", cmd_predict, "score sessions of an event log")
    p.add_argument("checkpoint")
    p.add_argument("events", help="event CSV")
    return parser


def _configure_logging():
    level = os.environ.get("INTENTFORGE_LOG", "info").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"INTENTFORGE_LOG: must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        cfg = load_config(args.config, args.overrides, args.seed)
        args.func(args, cfg)
    except (IntentForgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
