"""Batch command-line entry points.

Eight subcommands: pretrain, finetune, forecast, impute, detect, classify,
probe, eval-metrics. Every run resolves a RunConfig (CLI flags override a
--run-config JSON file; MOMENT_MINI_SEED is the seed fallback), validates it
before any compute, and writes `report.json` — task, dataset, config hash,
seed, version, metric map — under the output directory. Exit codes: 0 on
success, 1 on a domain error, 2 on a usage error.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import metrics as mx
from .baselines import naive_forecast
from .data import Series, load_classes, load_csv, load_labels, save_csv
from .errors import ConfigError, ParseError, TsfmError, UndefinedMetricError
from .model import (
    ModelConfig,
    attach_forecast_head,
    init_weights,
    load_checkpoint,
    named_config,
    save_checkpoint,
)
from .pretrain import (
    PretrainConfig,
    evaluate_forecast_mse,
    linear_probe,
    pretrain,
)
from .probes import (
    frequency_error_curve,
    mask_embedding_stats,
    sinusoid_embedding_suite,
    zero_vs_mask_probe,
)
from .tasks import (
    ImputationSpec,
    apply_block_mask,
    classify_by_representation,
    detect_anomalies,
    long_forecast,
    zero_shot_impute,
    zero_shot_short_forecast,
)
from . import numcore as nc

REQUIRED = object()

COMMAND_DEFAULTS = {
    "pretrain": {
        "config": "tiny",
        "data": REQUIRED,
        "out": "out",
        "seed": None,
        "steps": 2000,
        "epochs": None,
        "batch_size": 64,
        "mask_ratio": 0.30,
        "lr_init": 1e-4,
        "lr_final": 1e-5,
    },
    "finetune": {
        "ckpt": REQUIRED,
        "data": REQUIRED,
        "out": "out",
        "seed": None,
        "head": "forecast",
        "horizon": 16,
        "epochs": 1,
        "batch_size": 64,
        "lr_init": 1e-4,
        "lr_final": 1e-5,
        "unfreeze": False,
    },
    "forecast": {
        "ckpt": REQUIRED,
        "data": REQUIRED,
        "out": "out",
        "seed": None,
        "horizon": 16,
        "mode": "zero-shot",
        "workers": 1,
    },
    "impute": {
        "ckpt": REQUIRED,
        "data": REQUIRED,
        "out": "out",
        "seed": None,
        "ratio": 0.25,
        "block_len": 8,
        "workers": 1,
    },
    "detect": {
        "ckpt": REQUIRED,
        "data": REQUIRED,
        "labels": REQUIRED,
        "out": "out",
        "seed": None,
    },
    "classify": {
        "ckpt": REQUIRED,
        "train_data": REQUIRED,
        "train_classes": REQUIRED,
        "test_data": REQUIRED,
        "test_classes": REQUIRED,
        "out": "out",
        "seed": None,
    },
    "probe": {
        "ckpt": REQUIRED,
        "out": "out",
        "seed": None,
        "probes": "all",
        "kind": "frequency",
        "data": None,
    },
    "eval-metrics": {
        "scores": REQUIRED,
        "labels": REQUIRED,
        "out": "out",
        "seed": None,
    },
}

PROBE_NAMES = ("suite", "curve", "mask-stats", "zero-vs-mask")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tinytsfm",
        description="Masked time-series modeling: pre-training, task "
        "evaluation, and interpretability probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--run-config", default=None,
                       help="JSON file of option defaults (flags override)")
        for flag, kwargs in flags:
            p.add_argument(flag, default=None, **kwargs)
        return p

    add("pretrain", "masked pre-training over a corpus", [
        ("--config", dict(help="model size name or ModelConfig JSON file")),
        ("--data", dict(help="series CSV file or directory of CSVs")),
        ("--out", dict(help="output directory")),
        ("--seed", dict(type=int)),
        ("--steps", dict(type=int, help="total optimizer steps")),
        ("--epochs", dict(type=int)),
        ("--batch-size", dict(type=int)),
        ("--mask-ratio", dict(type=float)),
        ("--lr-init", dict(type=float)),
        ("--lr-final", dict(type=float)),
    ])
    add("finetune", "train a task head on a frozen encoder (or unfreeze all)", [
        ("--ckpt", dict(help="checkpoint manifest path")),
        ("--data", dict(help="series CSV file or directory")),
        ("--out", dict()),
        ("--seed", dict(type=int)),
        ("--head", dict(choices=["forecast", "reconstruction"])),
        ("--horizon", dict(type=int)),
        ("--epochs", dict(type=int)),
        ("--batch-size", dict(type=int)),
        ("--lr-init", dict(type=float)),
        ("--lr-final", dict(type=float)),
        ("--unfreeze", dict(action="store_true")),
    ])
    add("forecast", "forecast the tail of each series and score it", [
        ("--ckpt", dict()),
        ("--data", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
        ("--horizon", dict(type=int)),
        ("--mode", dict(choices=["zero-shot", "probed-head"])),
        ("--workers", dict(type=int)),
    ])
    add("impute", "hide blocks, reconstruct them, and score the fill", [
        ("--ckpt", dict()),
        ("--data", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
        ("--ratio", dict(type=float)),
        ("--block-len", dict(type=int)),
        ("--workers", dict(type=int)),
    ])
    add("detect", "score anomalies and evaluate against labels", [
        ("--ckpt", dict()),
        ("--data", dict()),
        ("--labels", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
    ])
    add("classify", "SVM over sequence representations", [
        ("--ckpt", dict()),
        ("--train-data", dict()),
        ("--train-classes", dict()),
        ("--test-data", dict()),
        ("--test-classes", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
    ])
    add("probe", "interpretability probes (CSV/SVG artifacts)", [
        ("--ckpt", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
        ("--probes", dict(help="comma list of "
                               f"{','.join(PROBE_NAMES)} or 'all'")),
        ("--kind", dict(help="sinusoid family for the embedding suite")),
        ("--data", dict(help="series CSV for the zero-vs-mask probe")),
    ])
    add("eval-metrics", "grade a score file against a label file", [
        ("--scores", dict()),
        ("--labels", dict()),
        ("--out", dict()),
        ("--seed", dict(type=int)),
    ])
    return parser


# ------------------------------------------------------------------ run config


def _env_seed():
    raw = os.environ.get("MOMENT_MINI_SEED")
    if raw is None:
        return 13
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(
            f"MOMENT_MINI_SEED must be an integer, got {raw!r}"
        ) from None


def resolve_run_config(args):
    """Merge CLI flags over --run-config JSON over defaults; reject unknown
    keys; fill the seed from MOMENT_MINI_SEED when nothing else sets it."""
    defaults = COMMAND_DEFAULTS[args.command]
    file_cfg = {}
    if args.run_config is not None:
        try:
            with open(args.run_config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise ParseError(f"run-config file not found: {args.run_config}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.run_config}: invalid JSON ({exc})") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{args.run_config}: run config must be a JSON object")
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown run-config keys: {unknown}")
    resolved = {"command": args.command}
    for key, default in defaults.items():
        flag_value = getattr(args, key)
        if flag_value is not None and flag_value is not False:
            resolved[key] = flag_value
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        elif key == "seed":
            resolved[key] = _env_seed()
        elif default is REQUIRED:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        else:
            resolved[key] = default
    return resolved


def config_hash(run_config):
    canonical = json.dumps(run_config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def write_report(run_config, dataset, metrics, extras=None):
    out_dir = run_config["out"]
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "task": run_config["command"],
        "dataset": dataset,
        "config_hash": config_hash(run_config),
        "seed": run_config["seed"],
        "version": f"v{__version__}",
        "metrics": metrics,
    }
    if extras:
        report.update(extras)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


# ------------------------------------------------------------------ helpers


def load_series_arg(path):
    """A CSV file, or a directory whose *.csv files are read in sorted order."""
    if os.path.isdir(path):
        series = []
        for name in sorted(os.listdir(path)):
            if name.endswith(".csv"):
                series.extend(load_csv(os.path.join(path, name)))
        if not series:
            raise ParseError(f"no .csv files found in directory {path}")
        return series
    return load_csv(path)


def map_series(fn, items, workers):
    """Order-preserving map, optionally across a thread pool."""
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _model_config_arg(value):
    if isinstance(value, ModelConfig):
        return value
    if value.endswith(".json"):
        try:
            with open(value, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ParseError(f"model config file not found: {value}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{value}: invalid JSON ({exc})") from None
        try:
            return ModelConfig(**raw)
        except TypeError as exc:
            raise ConfigError(f"{value}: {exc}") from None
    return named_config(value)


def _train_config(rc, mask_ratio=None):
    return PretrainConfig(
        mask_ratio=rc.get("mask_ratio", 0.30) if mask_ratio is None else mask_ratio,
        batch_size=rc["batch_size"],
        epochs=rc["epochs"],
        total_steps=rc.get("steps"),
        seed=rc["seed"],
        schedule=nc.CosineSchedule(lr_init=rc["lr_init"], lr_final=rc["lr_final"]),
    )


def _forecast_split(series, horizon):
    if len(series) <= horizon:
        raise ConfigError(
            f"series {series.name!r} of length {len(series)} cannot hold out "
            f"a horizon of {horizon}"
        )
    history = series.slice(0, len(series) - horizon)
    truth = series.values[len(series) - horizon:]
    return history, truth


# ------------------------------------------------------------------ commands


def cmd_pretrain(rc):
    config = _model_config_arg(rc["config"])
    dataset = load_series_arg(rc["data"])
    if rc["epochs"] is None and rc.get("steps") is None:
        raise ConfigError("set --steps or --epochs")
    weights = init_weights(config, seed=rc["seed"])
    weights, log = pretrain(weights, dataset, _train_config(rc))
    os.makedirs(rc["out"], exist_ok=True)
    ckpt = save_checkpoint(weights, os.path.join(rc["out"], "checkpoint.json"))
    log.save(os.path.join(rc["out"], "trainlog.csv"))
    metrics = {
        "initial_loss": log.initial_loss,
        "final_loss": log.final_loss,
        "steps": len(log.records),
    }
    return write_report(rc, rc["data"], metrics, {"checkpoint": ckpt})


def cmd_finetune(rc):
    weights = load_checkpoint(rc["ckpt"])
    dataset = load_series_arg(rc["data"])
    cfg = _train_config(rc)
    freeze = not rc["unfreeze"]
    metrics = {"head": rc["head"], "epochs": rc["epochs"], "frozen_encoder": freeze}
    if rc["head"] == "forecast":
        horizon = rc["horizon"]
        pairs = []
        for s in dataset:
            history, truth = _forecast_split(s, horizon)
            pairs.append((history, truth))
        if weights.horizon != horizon:
            attach_forecast_head(weights, horizon, seed=rc["seed"])
        metrics["mse_before"] = evaluate_forecast_mse(weights, pairs)
        linear_probe(weights, "forecast", pairs, epochs=rc["epochs"],
                     cfg=cfg, freeze=freeze)
        metrics["mse_after"] = evaluate_forecast_mse(weights, pairs)
        metrics["horizon"] = horizon
    else:
        linear_probe(weights, "reconstruction", dataset, epochs=rc["epochs"],
                     cfg=cfg, freeze=freeze)
    os.makedirs(rc["out"], exist_ok=True)
    ckpt = save_checkpoint(weights, os.path.join(rc["out"], "checkpoint.json"))
    return write_report(rc, rc["data"], metrics, {"checkpoint": ckpt})


def cmd_forecast(rc):
    weights = load_checkpoint(rc["ckpt"])
    dataset = load_series_arg(rc["data"])
    horizon = rc["horizon"]

    def one(series):
        history, truth = _forecast_split(series, horizon)
        if rc["mode"] == "probed-head":
            fc = long_forecast(weights, history, horizon)
        else:
            fc = zero_shot_short_forecast(weights, history, horizon)
        naive = naive_forecast(history, horizon)
        return {
            "name": series.name,
            "mse": mx.mse(truth, fc.values),
            "mae": mx.mae(truth, fc.values),
            "smape": mx.smape_m4(truth, fc.values),
            "naive_mse": mx.mse(truth, naive),
        }

    rows = map_series(one, dataset, rc["workers"])
    metrics = {
        key: float(np.mean([r[key] for r in rows]))
        for key in ("mse", "mae", "smape", "naive_mse")
    }
    metrics["horizon"] = horizon
    metrics["mode"] = rc["mode"]
    return write_report(rc, rc["data"], metrics, {"per_series": rows})


def cmd_impute(rc):
    weights = load_checkpoint(rc["ckpt"])
    dataset = load_series_arg(rc["data"])

    def one(indexed):
        i, series = indexed
        spec = ImputationSpec(ratio=rc["ratio"], block_len=rc["block_len"],
                              seed=rc["seed"] + i)
        masked = apply_block_mask(series, spec)
        filled = zero_shot_impute(weights, masked)
        held_out = series.observed & ~masked.observed
        if not held_out.any():
            raise ConfigError(
                f"series {series.name!r}: no observed values were hidden"
            )
        truth = series.values[held_out]
        guess = filled.values[held_out]
        return {
            "name": series.name,
            "mse": mx.mse(truth, guess),
            "mae": mx.mae(truth, guess),
        }

    rows = map_series(one, list(enumerate(dataset)), rc["workers"])
    metrics = {
        "mse": float(np.mean([r["mse"] for r in rows])),
        "mae": float(np.mean([r["mae"] for r in rows])),
        "ratio": rc["ratio"],
    }
    return write_report(rc, rc["data"], metrics, {"per_series": rows})


def cmd_detect(rc):
    weights = load_checkpoint(rc["ckpt"])
    dataset = load_series_arg(rc["data"])
    if len(dataset) != 1:
        raise ConfigError(
            f"detect expects a single-series file, got {len(dataset)} columns"
        )
    series = dataset[0]
    labels = load_labels(rc["labels"], n_expected=len(series))
    series = dataclasses.replace(series, anomalies=labels)
    result = detect_anomalies(weights, series)
    got_labels = result.series.anomalies
    metrics = {"adj_best_f1": mx.adjusted_best_f1(result.scores, got_labels)}
    try:
        metrics["vus_roc"] = mx.vus_roc(result.scores, got_labels)
    except UndefinedMetricError as exc:
        metrics["vus_roc"] = f"error: {exc}"
    os.makedirs(rc["out"], exist_ok=True)
    save_csv(
        os.path.join(rc["out"], "scores.csv"),
        [Series(values=result.scores, name="score")],
    )
    return write_report(rc, rc["data"], metrics)


def cmd_classify(rc):
    weights = load_checkpoint(rc["ckpt"])
    train = load_series_arg(rc["train_data"])
    test = load_series_arg(rc["test_data"])

    def labels_for(collection, path):
        mapping = load_classes(path)
        missing = [s.name for s in collection if s.name not in mapping]
        if missing:
            raise ConfigError(f"{path}: no class for series {missing}")
        return [mapping[s.name] for s in collection]

    result = classify_by_representation(
        weights,
        train,
        labels_for(train, rc["train_classes"]),
        test,
        labels_for(test, rc["test_classes"]),
        seed=rc["seed"],
    )
    os.makedirs(rc["out"], exist_ok=True)
    with open(os.path.join(rc["out"], "predictions.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("name,predicted\n")
        for s, pred in zip(test, result.predictions):
            fh.write(f"{s.name},{pred}\n")
    metrics = {
        "accuracy": result.accuracy,
        "best_c": result.best_c,
        "val_accuracy": result.val_accuracy,
    }
    return write_report(rc, rc["test_data"], metrics)


def cmd_probe(rc):
    weights = load_checkpoint(rc["ckpt"])
    which = (
        list(PROBE_NAMES) if rc["probes"] == "all"
        else [p.strip() for p in rc["probes"].split(",") if p.strip()]
    )
    unknown = sorted(set(which) - set(PROBE_NAMES))
    if unknown:
        raise ConfigError(f"unknown probes {unknown}; choose from {PROBE_NAMES}")
    metrics = {}
    for probe in which:
        if probe == "suite":
            suite = sinusoid_embedding_suite(
                weights, rc["kind"], out_dir=rc["out"], seed=rc["seed"]
            )
            metrics["suite_explained_pc1"] = float(suite.explained[0])
            metrics["suite_explained_pc2"] = float(suite.explained[1])
        elif probe == "curve":
            curve = frequency_error_curve(
                weights, out_dir=rc["out"], seed=rc["seed"]
            )
            metrics["curve_spearman"] = curve.spearman
        elif probe == "mask-stats":
            stats = mask_embedding_stats(weights)
            metrics["mask_mean"] = stats["mean"]
            metrics["mask_std"] = stats["std"]
            metrics["mask_ks"] = stats["ks_statistic"]
        elif probe == "zero-vs-mask":
            if rc["data"] is None:
                raise ConfigError("the zero-vs-mask probe needs --data")
            report = zero_vs_mask_probe(
                weights, load_series_arg(rc["data"]), seed=rc["seed"]
            )
            metrics["mask_token_mse"] = report.mask_token_mse
            metrics["zero_fill_mse"] = report.zero_fill_mse
    return write_report(rc, rc["ckpt"], metrics)


def cmd_eval_metrics(rc):
    score_series = load_csv(rc["scores"])
    if len(score_series) != 1:
        raise ConfigError(
            f"score file must hold one column, got {len(score_series)}"
        )
    scores = score_series[0].values
    labels = load_labels(rc["labels"], n_expected=len(scores))
    metrics = {"adj_best_f1": mx.adjusted_best_f1(scores, labels)}
    try:
        metrics["vus_roc"] = mx.vus_roc(scores, labels)
    except UndefinedMetricError as exc:
        metrics["vus_roc"] = f"error: {exc}"
    return write_report(rc, rc["scores"], metrics)


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "forecast": cmd_forecast,
    "impute": cmd_impute,
    "detect": cmd_detect,
    "classify": cmd_classify,
    "probe": cmd_probe,
    "eval-metrics": cmd_eval_metrics,
}


def dispatch(argv=None):
    """Parse argv, run one command, return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        rc = resolve_run_config(args)
        report_path = COMMANDS[args.command](rc)
        print(report_path)
        return 0
    except TsfmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
