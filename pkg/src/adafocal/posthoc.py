"""Temperature scaling fitted by grid search on validation ECE."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .binning import EvalBatch
from .errors import ShapeError
from .metrics import DEFAULT_BINS, ece_em, ece_ew
from .numeric_core import softmax

TEMPERATURE_GRID = tuple(k / 10 for k in range(1, 101))
_METRICS = {"em": ece_em, "ew": ece_ew}


@dataclass
class TemperatureResult:
    temperature: float
    val_ece_before: float
    val_ece_after: float
    metric: str

    def to_dict(self) -> dict:
        return asdict(self)


def temperature_scale(logits, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature)


def calibration_metric(name: str):
    try:
        return _METRICS[name]
    except KeyError:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}, got {name!r}") from None


def fit_temperature(
    val_logits, val_labels, metric: str = "em", num_bins: int = DEFAULT_BINS
) -> TemperatureResult:
    """Pick the grid temperature with the lowest validation ECE.

    The grid is ``0.1, 0.2, ..., 10.0``. Equal scores are resolved toward
    the temperature closest to 1, then the smaller temperature.
    """
    score = calibration_metric(metric)
    logits = np.asarray(val_logits, dtype=np.float64)
    labels = np.asarray(val_labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not match")
    if logits.shape[0] == 0:
        raise ValueError("validation set is empty")
    results = [
        (score(EvalBatch(temperature_scale(logits, t), labels), num_bins), abs(t - 1.0), t)
        for t in TEMPERATURE_GRID
    ]
    best_ece, _, best_t = min(results)
    before = score(EvalBatch(softmax(logits), labels), num_bins)
    return TemperatureResult(best_t, before, best_ece, metric)
