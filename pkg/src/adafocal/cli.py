"""``adafocal`` command line: train, eval, calibrate, ood, report.

Exit codes: 0 success, 2 usage or configuration problem, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .binning import EvalBatch
from .data import Dataset, read_csv_table
from .errors import ConfigError
from .harness import RunConfig, evaluate_split, load_run_config, train
from .metrics import ece_report, entropy, roc_curve
from .numeric_core import MlpModel, forward, softmax
from .posthoc import calibration_metric, fit_temperature, temperature_scale

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
SEED_ENV = "ADAFOCAL_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _resolve_config(config_path: Path) -> RunConfig:
    config = load_run_config(config_path)
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        try:
            seed_value = int(seed)
        except ValueError:
            raise ConfigError(f"not an integer: {seed!r}", SEED_ENV) from None
        config = dataclasses.replace(
            config, train=dataclasses.replace(config.train, seed=seed_value)
        )
    if config.data.path is not None:
        path = Path(config.data.path)
        if not path.is_absolute():
            path = (config_path.parent / path).resolve()
        config = dataclasses.replace(config, data=dataclasses.replace(config.data, path=str(path)))
    return config


def cmd_train(config_path, out_dir) -> int:
    config = _resolve_config(Path(config_path))
    dataset = config.data.build()
    model, history = train(dataset, config.model, config.train)
    splits = {
        name: evaluate_split(model, dataset, name)
        for name in ("val", "test")
        if len(dataset.splits[name])
    }
    artifacts.write_run(out_dir, artifacts.render_run(config, model, history, splits))
    return EXIT_OK


def _load_run(run_dir) -> tuple[RunConfig, MlpModel, Dataset]:
    missing = artifacts.missing_files(run_dir)
    needed = {artifacts.CONFIG, artifacts.MODEL}
    if needed & set(missing):
        raise CliError(f"incomplete run directory {run_dir}: missing {sorted(needed & set(missing))}",
                       EXIT_USAGE)
    run = Path(run_dir)
    try:
        config = RunConfig.from_dict(json.loads((run / artifacts.CONFIG).read_text()))
    except json.JSONDecodeError as exc:
        raise CliError(f"{artifacts.CONFIG} is not valid JSON: {exc}", EXIT_USAGE) from exc
    try:
        model = artifacts.load_model(run / artifacts.MODEL)
    except (KeyError, ValueError) as exc:
        raise CliError(f"{artifacts.MODEL} is not a valid model: {exc}", EXIT_USAGE) from exc
    return config, model, config.data.build(run)


def cmd_eval(run_dir, split: str = "test") -> int:
    config, model, dataset = _load_run(run_dir)
    if not len(dataset.splits[split]):
        raise CliError(f"split {split!r} is empty", EXIT_USAGE)
    records, error = evaluate_split(model, dataset, split)
    _emit({
        "split": split,
        "n": len(records),
        "error": error,
        "ece": ece_report(records, config.train.eval_bins).to_dict(),
    })
    return EXIT_OK


def _error(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) != labels))


def cmd_calibrate(run_dir, metric: str = "em") -> int:
    config, model, dataset = _load_run(run_dir)
    score = calibration_metric(metric)
    nb = config.train.eval_bins
    x_val, y_val = dataset.split("val")
    x_test, y_test = dataset.split("test")
    if not len(y_val):
        raise CliError("validation split is empty", EXIT_USAGE)
    result = fit_temperature(forward(model, x_val), y_val, metric, nb)
    out = result.to_dict()
    out["val_error"] = _error(softmax(forward(model, x_val)), y_val)
    if len(y_test):
        test_logits = forward(model, x_test)
        before = softmax(test_logits)
        after = temperature_scale(test_logits, result.temperature)
        out.update(
            test_ece_before=score(EvalBatch(before, y_test), nb),
            test_ece_after=score(EvalBatch(after, y_test), nb),
            test_error_before=_error(before, y_test),
            test_error_after=_error(after, y_test),
        )
    _emit(out)
    return EXIT_OK


def _read_features(path, label_column: str, dim: int, role: str) -> np.ndarray:
    x, _, _ = read_csv_table(path, label_column)
    if x.shape[1] != dim:
        raise CliError(f"{role} data has {x.shape[1]} features, model expects {dim}", EXIT_USAGE)
    return x


def cmd_ood(run_dir, in_csv, out_csv, temperature: float | None = None) -> int:
    config, model, _ = _load_run(run_dir)
    dim = model.layer_dims[0]
    x_in = _read_features(in_csv, config.data.label_column, dim, "in-distribution")
    x_out = _read_features(out_csv, config.data.label_column, dim, "out-of-distribution")
    t = 1.0 if temperature is None else temperature
    if not t > 0:
        raise CliError(f"temperature must be positive, got {t}", EXIT_USAGE)
    h_in = entropy(temperature_scale(forward(model, x_in), t))
    h_out = entropy(temperature_scale(forward(model, x_out), t))
    roc = roc_curve(h_in, h_out)
    _emit({
        "auroc": roc.auroc,
        "temperature": t,
        "n_in": int(h_in.size),
        "n_out": int(h_out.size),
        "mean_entropy_in": float(np.mean(h_in)),
        "mean_entropy_out": float(np.mean(h_out)),
        "roc": {"fpr": roc.fpr, "tpr": roc.tpr, "thresholds": roc.thresholds},
    })
    return EXIT_OK


def cmd_report(run_dir) -> int:
    missing = artifacts.missing_files(run_dir)
    if missing:
        raise CliError(f"incomplete run directory {run_dir}; missing: {', '.join(missing)}",
                       EXIT_USAGE)
    run = Path(run_dir).resolve()
    config = RunConfig.from_dict(json.loads((run / artifacts.CONFIG).read_text()))
    lines = [ln for ln in (run / artifacts.HISTORY).read_text().splitlines() if ln.strip()]
    if not lines:
        raise CliError(f"{artifacts.HISTORY} is empty", EXIT_USAGE)
    last = json.loads(lines[-1])
    has_gammas = (run / artifacts.GAMMAS).is_file()
    _emit({
        "run": str(run),
        "loss": config.train.loss.name,
        "epochs": last["epoch"],
        "final": {
            "val_error": last["val_error"],
            "test_error": last["test_error"],
            "val_ece": last["val_ece"],
            "test_ece": last["test_ece"],
            "gammas": last["gammas"],
        },
        "selected_model": json.loads((run / artifacts.REPORT).read_text()),
        "reliability_csv": [str(run / artifacts.BINS)],
        "gammas_csv": str(run / artifacts.GAMMAS) if has_gammas else None,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adafocal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a run directory")
    p.add_argument("--config", required=True, help="JSON or TOML run config")
    p.add_argument("--out", required=True, help="output run directory")

    p = sub.add_parser("eval", help="error and ECE variants on one split")
    p.add_argument("--run", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))

    p = sub.add_parser("calibrate", help="fit a temperature on the validation split")
    p.add_argument("--run", required=True)
    p.add_argument("--metric", default="em", choices=("em", "ew"))

    p = sub.add_parser("ood", help="entropy-based AUROC between two feature CSVs")
    p.add_argument("--run", required=True)
    p.add_argument("--in", dest="in_data", required=True, help="in-distribution CSV")
    p.add_argument("--out-data", required=True, help="out-of-distribution CSV")
    p.add_argument("--temperature", type=float, default=None)

    p = sub.add_parser("report", help="summarise a finished run")
    p.add_argument("--run", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args.config, args.out)
        if args.command == "eval":
            return cmd_eval(args.run, args.split)
        if args.command == "calibrate":
            return cmd_calibrate(args.run, args.metric)
        if args.command == "ood":
            return cmd_ood(args.run, args.in_data, args.out_data, args.temperature)
        return cmd_report(args.run)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
