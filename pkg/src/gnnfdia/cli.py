"""Command-line entry point: ``gnnfdia {generate-data,generate-attacks,train,evaluate}``.

Settings come from built-in defaults, then an optional ``--config`` JSON file,
then explicit flags (last wins). Exit status is 0 on success, 2 for bad input
or configuration and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .attack import PRESETS, STEP_SCHEDULES, AttackConfig, generate_attacked_dataset
from .detector import (
    DegenerateDatasetError,
    Metrics,
    TrainConfig,
    build_detector,
    build_mlp_baseline,
    evaluate,
    load_model,
    node_features,
    roc_auc,
    save_model,
    split_indices,
    train,
)
from .estimation import TAU_BDD_DEFAULT, bdd_normalized_residuals, estimate_state, measurement_variances
from .grid import CaseError, build_ybus, load_case
from .powerflow import ConvergenceError, MeasurementVector, StateVector, full_layout
from .scenario import (
    ProfileError,
    ScenarioConfig,
    generate_dataset,
    ingest_profile,
    load_dataset,
    save_dataset,
    synthetic_profile,
)

log = logging.getLogger("gnnfdia")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "case": "ieee14",
    "profile": "synthetic",
    "T": 2000,
    "seed": 0,
    "preset": "balanced",
    "model": "gnn",
    "tau_bdd": TAU_BDD_DEFAULT,
    "tau_freq": None,
    "tau_loss": None,
    "residual_denominator": "sqrt",
    "paper_standardization": False,
    "scenario": {},
    "attack": {},
    "train": {},
}


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = set(doc) - set(DEFAULTS) - {"out", "data", "checkpoint"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags (in that order)."""
    settings = dict(DEFAULTS)
    settings.update(_load_config(getattr(args, "config", None)))
    for key, value in vars(args).items():
        if key in ("command", "config", "func") or value is None:
            continue
        settings[key] = value
    return settings


def _sub_config(cls, base, overrides: dict, what: str):
    names = {f.name for f in fields(cls)}
    bad = set(overrides) - names
    if bad:
        raise ConfigError(f"unknown {what} settings: {sorted(bad)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} settings: {exc}") from None


def _require_dir(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if not (p / "meta.json").exists():
        raise ConfigError(f"no dataset at {p} (missing meta.json)")
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def cmd_generate_data(s: dict) -> int:
    case = load_case(s["case"])
    if s["profile"] == "synthetic":
        profile = synthetic_profile()
    else:
        profile = ingest_profile(s["profile"])
    if int(s["T"]) < 1:
        raise ConfigError("--T must be positive")
    cfg = _sub_config(ScenarioConfig, ScenarioConfig(), s["scenario"], "scenario")
    out = Path(s.get("out") or f"data/{case.name}")
    ds = generate_dataset(case, profile, int(s["T"]), cfg, int(s["seed"]))
    save_dataset(ds, out)
    log.info("wrote %d honest snapshots of %s to %s", ds.T, case.name, out)
    return 0


def attack_config(s: dict) -> AttackConfig:
    if s["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {s['preset']!r}; choose from {sorted(PRESETS)}")
    cfg = _sub_config(AttackConfig, AttackConfig.preset(s["preset"]), s["attack"], "attack")
    if s.get("tau_freq") is not None:
        cfg = replace(cfg, tau_freq=float(s["tau_freq"]))
    if s.get("tau_loss") is not None:
        cfg = replace(cfg, tau_loss=float(s["tau_loss"]))
    if cfg.step_schedule not in STEP_SCHEDULES:
        raise ConfigError(f"unknown step schedule {cfg.step_schedule!r}")
    return cfg


def cmd_generate_attacks(s: dict) -> int:
    src = _require_dir(s.get("data"), "data")
    honest = load_dataset(src)
    cfg = attack_config(s)
    out = Path(s.get("out") or f"{src}_{s['preset']}")
    ds = generate_attacked_dataset(honest, cfg, int(s["seed"]))
    save_dataset(ds, out)
    summ = ds.attacks["summary"]
    log.info("accepted %d of %d attempts (%.1f%% of snapshots attacked); wrote %s",
             summ["accepted"], summ["attempted"], 100 * summ["positive_fraction"], out)
    return 0


def _train_config(s: dict) -> TrainConfig:
    base = TrainConfig(seed=int(s["seed"]), paper_standardization=bool(s["paper_standardization"]))
    return _sub_config(TrainConfig, base, s["train"], "train")


def _metrics_doc(metrics, result_splits: dict, seed: int, cfg_hash: str, **extra) -> dict:
    doc = {"dr": metrics.dr, "fa": metrics.fa, "f1": metrics.f1,
           "counts": {"tp": metrics.tp, "fp": metrics.fp, "tn": metrics.tn, "fn": metrics.fn},
           "degenerate": list(metrics.degenerate), "split_sizes": result_splits, "seed": seed,
           "config_hash": cfg_hash}
    doc.update(extra)
    return doc


def cmd_train(s: dict) -> int:
    src = _require_dir(s.get("data"), "data")
    ds = load_dataset(src)
    if ds.Y is None:
        raise ConfigError(f"dataset at {src} has no labels; run generate-attacks first")
    cfg = _train_config(s)
    if s["model"] == "gnn":
        model = build_detector(ds.case, seed=cfg.seed)
    elif s["model"] == "mlp":
        model = build_mlp_baseline(ds.case, seed=cfg.seed)
    else:
        raise ConfigError(f"unknown model {s['model']!r}; choose gnn or mlp")
    result = train(model, ds, cfg)
    out = Path(s.get("out") or f"runs/{ds.case.name}_{s['model']}_{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model", {"train": {**cfg.__dict__, "splits": list(cfg.splits)},
                                      "optimizer": result.extra["optimizer"], "data": str(src)})
    with open(out / "history.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        writer.writeheader()
        for row in result.history:
            writer.writerow({k: repr(float(v)) if k != "epoch" else v for k, v in row.items()})
    _write_json(out / "metrics.json", _metrics_doc(result.test, result.splits, cfg.seed, cfg.digest(),
                                                   model=s["model"], best_epoch=result.best_epoch,
                                                   n_params=model.n_params))
    log.info("%s test F1 %.4f (DR %.4f, FA %.4f); wrote %s", s["model"], result.test.f1, result.test.dr,
             result.test.fa, out)
    return 0


def bdd_scores(ds, rows, denominator: str = "sqrt") -> np.ndarray:
    """Largest normalized residual for the given snapshot rows."""
    case = ds.case
    y = build_ybus(case)
    layout = full_layout(case)
    sc = ds.meta.get("scenario", {})
    out = np.empty(len(rows))
    for i, t in enumerate(rows):
        z = MeasurementVector(layout, ds.Z[t], measurement_variances(ds.Z[t], sc.get("sigma_n", 0.01),
                                                                       sc.get("variance_floor", 1e-8)))
        est = estimate_state(case, y, z, StateVector.from_row(ds.X[t], case.slack))
        out[i] = bdd_normalized_residuals(case, y, z, est, denominator=denominator).max_normalized
    return out


def cmd_evaluate(s: dict) -> int:
    src = _require_dir(s.get("data"), "data")
    ds = load_dataset(src)
    if ds.Y is None:
        raise ConfigError(f"dataset at {src} has no labels")
    if s["residual_denominator"] not in ("sqrt", "paper"):
        raise ConfigError("--residual-denominator must be sqrt or paper")
    cfg = _train_config(s)
    _, _, te = split_indices(ds.T, cfg.splits)
    x, y = node_features(ds.Z, ds.case)[te], ds.Y[te]
    out = Path(s.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    doc = {"split_sizes": {"test": int(len(te))}, "seed": cfg.seed, "config_hash": cfg.digest()}
    if s.get("checkpoint"):
        ckpt = Path(s["checkpoint"])
        if not ckpt.with_suffix(".json").exists():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        model = load_model(ckpt)
        m = evaluate(model, (x, y), own_statistics=cfg.paper_standardization)
        doc["model"] = _metrics_doc(m, {"test": int(len(te))}, cfg.seed, cfg.digest())
        log.info("model test F1 %.4f (DR %.4f, FA %.4f)", m.f1, m.dr, m.fa)
    scores = bdd_scores(ds, te, s["residual_denominator"])
    flagged = scores > float(s["tau_bdd"])
    truth = y > 0
    bm = Metrics.from_counts(int(np.sum(flagged & truth)), int(np.sum(flagged & ~truth)),
                             int(np.sum(~flagged & ~truth)), int(np.sum(~flagged & truth)))
    bdd = _metrics_doc(bm, {"test": int(len(te))}, cfg.seed, cfg.digest(), tau_bdd=float(s["tau_bdd"]),
                       denominator=s["residual_denominator"])
    if truth.any() and (~truth).any():
        bdd["roc_auc"] = roc_auc(scores, truth)
    doc["bdd"] = bdd
    _write_json(out / "metrics.json", doc)
    log.info("BDD test F1 %.4f (DR %.4f, FA %.4f); wrote %s", bm.f1, bm.dr, bm.fa, out / "metrics.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnfdia", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("generate-data", help="honest measurement time series")
    common(p)
    p.add_argument("--case", help="ieee14, ieee118, ieee300 or a case JSON path")
    p.add_argument("--profile", help="load profile CSV or 'synthetic'")
    p.add_argument("--T", type=int, dest="T")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("generate-attacks", help="splice stealth attacks into an honest dataset")
    common(p)
    p.add_argument("--data", help="honest dataset directory")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--tau-freq", type=float)
    p.add_argument("--tau-loss", type=float)
    p.set_defaults(func=cmd_generate_attacks)

    for name, func, helptext in (("train", cmd_train, "fit a detector"),
                                 ("evaluate", cmd_evaluate, "score a checkpoint and the BDD on the test split")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--data", help="labeled dataset directory")
        p.add_argument("--model", choices=["gnn", "mlp"])
        p.add_argument("--paper-standardization", action="store_true", default=None,
                       help="standardize every split with its own statistics")
        if name == "evaluate":
            p.add_argument("--checkpoint", help="model checkpoint written by train")
            p.add_argument("--tau-bdd", type=float)
            p.add_argument("--residual-denominator", choices=["sqrt", "paper"])
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        settings = resolve(args)
        settings.pop("verbose", None)
        return args.func(settings)
    except (ConfigError, CaseError, ProfileError, DegenerateDatasetError, FileNotFoundError) as exc:
        log.error("error: %s", exc)
        return EXIT_CONFIG
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
