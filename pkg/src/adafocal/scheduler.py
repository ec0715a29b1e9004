"""Per-bin gamma state machine driving the AdaFocal loss.

Each validation bin carries a signed gamma. Non-negative values select the
focal loss, negative values the inverse-focal loss with exponent ``|gamma|``.
After every update the gamma is multiplied by ``exp(+/- lam * E)`` where
``E = C_val - A_val`` is that bin's calibration error, clamped to
``[gamma_min, gamma_max]``, and flipped across zero whenever it would land
inside the dead zone ``(-S_th, S_th)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .binning import BinPartition, BinStats, bin_index
from .errors import ConfigError


@dataclass(frozen=True)
class SchedulerConfig:
    lam: float = 1.0
    gamma_max: float = 20.0
    gamma_min: float = -2.0
    switch_threshold: float = 0.2
    num_bins: int = 15
    update_every: int = 0
    history_cap: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ConfigError("must be finite and >= 0", "lam")
        if not self.gamma_max > 0:
            raise ConfigError("must be > 0", "gamma_max")
        if not self.gamma_min < 0:
            raise ConfigError("must be < 0", "gamma_min")
        if not (math.isfinite(self.switch_threshold) and self.switch_threshold > 0):
            raise ConfigError("must be finite and > 0", "switch_threshold")
        if not self.switch_threshold < self.gamma_max:
            raise ConfigError("must be below gamma_max", "switch_threshold")
        if not self.gamma_min < -self.switch_threshold:
            raise ConfigError("must be below -switch_threshold", "gamma_min")
        if int(self.num_bins) != self.num_bins or self.num_bins < 1:
            raise ConfigError("must be a positive integer", "num_bins")
        if int(self.update_every) != self.update_every or self.update_every < 0:
            raise ConfigError("must be a non-negative integer", "update_every")
        if self.history_cap is not None and self.history_cap < 1:
            raise ConfigError("must be positive or null", "history_cap")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SchedulerConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "scheduler")
        for key in ("lam", "gamma_max", "gamma_min", "switch_threshold"):
            if key in data:
                data[key] = float(data[key])
        return cls(**data)


@dataclass(frozen=True)
class GammaUpdate:
    step: int
    gammas: tuple[float, ...]
    errors: tuple[float, ...]


@dataclass
class GammaTable:
    gammas: np.ndarray
    history: list[GammaUpdate] = field(default_factory=list)
    updates: int = 0

    @property
    def num_bins(self) -> int:
        return len(self.gammas)

    def copy(self) -> "GammaTable":
        return GammaTable(self.gammas.copy(), list(self.history), self.updates)


def init_gammas(config: SchedulerConfig) -> GammaTable:
    return GammaTable(np.ones(config.num_bins))


def update_gammas(
    table: GammaTable, stats: BinStats, config: SchedulerConfig, step: int | None = None
) -> GammaTable:
    """Apply one gamma update from a snapshot of validation bin statistics.

    Bins without statistics (no validation samples) keep their gamma.
    Returns a new table; the input is left untouched.
    """
    if stats.num_bins != table.num_bins:
        raise ValueError(f"stats have {stats.num_bins} bins, table has {table.num_bins}")
    s_th = config.switch_threshold
    new = table.gammas.copy()
    for i, (g, e) in enumerate(zip(table.gammas, stats.error)):
        if not stats.counts[i] or not np.isfinite(e):
            continue
        if g >= 0:
            g_new = min(config.gamma_max, g * math.exp(config.lam * e))
            if abs(g_new) < s_th:
                g_new = -s_th
        else:
            g_new = max(config.gamma_min, g * math.exp(-config.lam * e))
            if abs(g_new) < s_th:
                g_new = s_th
        new[i] = g_new
    step = table.updates if step is None else step
    entry = GammaUpdate(step, tuple(float(x) for x in new), tuple(float(x) for x in stats.error))
    history = [*table.history, entry]
    if config.history_cap is not None:
        history = history[-config.history_cap:]
    return GammaTable(new, history, table.updates + 1)


def gamma_for_sample(p_n, partition: BinPartition, table: GammaTable):
    """Gamma of the bin containing ``p_n``; vectorised over arrays."""
    if partition.num_bins != table.num_bins:
        raise ValueError("partition and gamma table disagree on the number of bins")
    idx = bin_index(p_n, partition)
    out = table.gammas[idx]
    return float(out) if np.ndim(out) == 0 else out


def trajectory_rows(table: GammaTable) -> list[tuple[int, int, float, float]]:
    """Long-format ``(step, bin, gamma, E_val)`` rows from the update history."""
    return [
        (u.step, i, g, e)
        for u in table.history
        for i, (g, e) in enumerate(zip(u.gammas, u.errors))
    ]


def trajectory_csv(table: GammaTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "bin", "gamma", "e_val"])
    for step, i, g, e in trajectory_rows(table):
        w.writerow([step, i, repr(g), "" if math.isnan(e) else repr(e)])
    return buf.getvalue()
