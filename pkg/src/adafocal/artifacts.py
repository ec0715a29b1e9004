"""Run-directory layout: writing and reading training artifacts."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .binning import EvalBatch
from .harness import BINNED_LOSSES, RunConfig, TrainHistory
from .metrics import ece_report, reliability_csv, reliability_data
from .numeric_core import MlpModel

CONFIG = "config.json"
MODEL = "model.bin"
HISTORY = "history.jsonl"
REPORT = "report.json"
BINS = "bins.csv"
GAMMAS = "gammas.csv"


def required_files(config: RunConfig | None) -> list[str]:
    files = [CONFIG, MODEL, HISTORY, REPORT, BINS]
    if config is not None and config.train.loss.name in BINNED_LOSSES:
        files.append(GAMMAS)
    return files


def model_bytes(model: MlpModel) -> bytes:
    arrays = {"layer_dims": np.asarray(model.layer_dims, dtype=np.int64)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def load_model(path) -> MlpModel:
    with np.load(Path(path), allow_pickle=False) as data:
        dims = [int(d) for d in data["layer_dims"]]
        n = len(dims) - 1
        return MlpModel(dims, [data[f"w{i}"] for i in range(n)], [data[f"b{i}"] for i in range(n)])


def gammas_csv(history: TrainHistory) -> str:
    """Wide table: one row per epoch, one column per bin."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = [e for e in history.epochs if e.get("gammas") is not None]
    m = len(rows[0]["gammas"]) if rows else 0
    w.writerow(["epoch", *[f"gamma_{i}" for i in range(m)]])
    for e in rows:
        w.writerow([e["epoch"], *[repr(g) for g in e["gammas"]]])
    return buf.getvalue()


def split_summary(records: EvalBatch | None, error: float | None, num_bins: int) -> dict | None:
    if records is None:
        return None
    return {"n": len(records), "error": error, "ece": ece_report(records, num_bins).to_dict()}


def render_run(
    config: RunConfig, model: MlpModel, history: TrainHistory,
    splits: dict[str, tuple[EvalBatch, float]],
) -> dict[str, bytes]:
    """All artifact files as ``name -> content``."""
    nb = config.train.eval_bins
    files = {
        CONFIG: (json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n").encode(),
        MODEL: model_bytes(model),
        HISTORY: history.to_jsonl().encode(),
        REPORT: (
            json.dumps(
                {name: split_summary(r, e, nb) for name, (r, e) in splits.items()},
                indent=2, sort_keys=True,
            ) + "\n"
        ).encode(),
    }
    test = splits.get("test") or splits.get("val")
    files[BINS] = (
        reliability_csv(reliability_data(test[0], nb, "equal_mass")).encode()
        if test and test[0] is not None and len(test[0])
        else b"bin,lower,upper,count,conf,acc\n"
    )
    if config.train.loss.name in BINNED_LOSSES:
        files[GAMMAS] = gammas_csv(history).encode()
    return files


def write_run(out_dir, files: dict[str, bytes]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    for name, content in files.items():
        tmp = out / f".{name}.tmp"
        tmp.write_bytes(content)
        staged.append((tmp, out / name))
    for tmp, final in staged:
        tmp.replace(final)


def missing_files(run_dir) -> list[str]:
    run = Path(run_dir)
    config = None
    if (run / CONFIG).is_file():
        try:
            config = RunConfig.from_dict(json.loads((run / CONFIG).read_text()))
        except (ValueError, TypeError):
            config = None
    return [f for f in required_files(config) if not (run / f).is_file()]
