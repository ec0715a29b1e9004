"""Training loop wiring the losses, the gamma scheduler and the metrics.

The calibration-driven losses (``adafocal`` and ``calfocal``) bin every
training sample by its true-class probability using the *validation* bin
boundaries, which are rebuilt from validation top-class confidences at each
gamma update. Before the first update the bins are equal-width and every
gamma is 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .binning import (
    BinPartition,
    BinStats,
    EvalBatch,
    bin_index,
    compute_bin_stats,
    equal_mass_partition,
    equal_width_partition,
)
from .data import DEFAULT_FRACTIONS, SYNTHETIC_KINDS, Dataset, generate_synthetic, load_csv
from .errors import ConfigError, DomainError, ShapeError
from .metrics import DEFAULT_BINS, ece_report
from .numeric_core import (
    MlpModel,
    OptimizerState,
    backward,
    forward,
    forward_trace,
    init_mlp,
    init_optimizer,
    logit_grad_from_prob_grad,
    log_softmax,
    sgd_momentum_step,
    softmax,
    true_prob_grad_to_logit_grad,
)
from .scheduler import GammaTable, GammaUpdate, SchedulerConfig, init_gammas, update_gammas

LOSS_NAMES = (
    "ce", "focal", "inverse_focal", "flsd53", "calfocal", "adafocal", "brier", "label_smoothing",
)
BINNED_LOSSES = ("calfocal", "adafocal")
PROB_CLAMP = (1e-12, 1.0 - 1e-12)


def flsd53_gamma(p):
    """Sample-dependent focal gamma: 5 below a true-class probability of 0.2, else 3."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~(arr > 0.0)) or np.any(arr > 1.0):
        raise DomainError("probability must lie in (0, 1]")
    out = np.where(arr < 0.2, 5.0, 3.0)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# configuration


def _reject_unknown(data: dict, cls, where: str):
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where)


@dataclass(frozen=True)
class LossSpec:
    name: str = "ce"
    gamma: float | None = None
    case: int | None = None
    eps: float | None = None
    scheduler: SchedulerConfig | None = None

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ConfigError(f"must be one of {LOSS_NAMES}, got {self.name!r}", "loss.name")
        if self.name in ("focal", "inverse_focal"):
            if self.gamma is None or not math.isfinite(self.gamma) or self.gamma < 0:
                raise ConfigError("needs a finite gamma >= 0", "loss.gamma")
        if self.name == "calfocal":
            if self.case is None:
                object.__setattr__(self, "case", 2)
            if self.case not in (1, 2):
                raise ConfigError("must be 1 or 2", "loss.case")
        if self.name in BINNED_LOSSES and self.scheduler is None:
            object.__setattr__(self, "scheduler", SchedulerConfig())
        if self.name == "label_smoothing":
            if self.eps is None:
                object.__setattr__(self, "eps", 0.05)
            if not 0.0 <= self.eps < 1.0:
                raise ConfigError("must lie in [0, 1)", "loss.eps")

    def to_dict(self) -> dict:
        d = {"name": self.name}
        for key in ("gamma", "case", "eps"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.scheduler is not None:
            d["scheduler"] = self.scheduler.to_dict()
        return d

    @classmethod
    def from_dict(cls, data) -> "LossSpec":
        if isinstance(data, str):
            data = {"name": data}
        data = dict(data)
        _reject_unknown(data, cls, "loss")
        if "scheduler" in data and data["scheduler"] is not None:
            data["scheduler"] = SchedulerConfig.from_dict(data["scheduler"])
        for key in ("gamma", "eps"):
            if data.get(key) is not None:
                data[key] = float(data[key])
        return cls(**data)


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (32,)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive", "model.hidden")

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        _reject_unknown(data, cls, "model")
        return cls(**data)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.1),)
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    eval_bins: int = DEFAULT_BINS
    selection: str = "final"

    def __post_init__(self):
        object.__setattr__(
            self, "lr_schedule", tuple((int(e), float(lr)) for e, lr in self.lr_schedule)
        )
        if self.epochs < 0:
            raise ConfigError("must be >= 0", "train.epochs")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "train.batch_size")
        if not self.lr_schedule or self.lr_schedule[0][0] != 0:
            raise ConfigError("must start at epoch 0", "train.lr_schedule")
        starts = [e for e, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("epochs must be strictly ascending", "train.lr_schedule")
        if any(not lr > 0 for _, lr in self.lr_schedule):
            raise ConfigError("learning rates must be positive", "train.lr_schedule")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("must lie in [0, 1)", "train.momentum")
        if self.weight_decay < 0:
            raise ConfigError("must be >= 0", "train.weight_decay")
        if self.eval_bins < 1:
            raise ConfigError("must be >= 1", "train.eval_bins")
        if self.selection not in ("final", "best_val_error"):
            raise ConfigError("must be 'final' or 'best_val_error'", "train.selection")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if epoch >= start:
                lr = value
        return lr

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_schedule"] = [list(x) for x in self.lr_schedule]
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        _reject_unknown(data, cls, "train")
        if "loss" in data:
            data["loss"] = LossSpec.from_dict(data["loss"])
        if "lr_schedule" in data:
            try:
                data["lr_schedule"] = tuple((e, lr) for e, lr in data["lr_schedule"])
            except (TypeError, ValueError):
                raise ConfigError("must be a list of [epoch, lr] pairs", "train.lr_schedule") from None
        return cls(**data)


@dataclass(frozen=True)
class DataSpec:
    kind: str = "gauss_mixture"
    num_classes: int = 3
    n: int = 3000
    noise: float = 0.6
    seed: int = 0
    dim: int = 2
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    path: str | None = None
    label_column: str = "label"

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if self.kind not in (*SYNTHETIC_KINDS, "csv"):
            raise ConfigError(f"must be one of {(*SYNTHETIC_KINDS, 'csv')}", "data.kind")
        if self.kind == "csv" and not self.path:
            raise ConfigError("csv data needs a path", "data.path")
        if len(self.fractions) != 3 or not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ConfigError("need three fractions summing to 1", "data.fractions")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DataSpec":
        _reject_unknown(data, cls, "data")
        return cls(**data)

    def build(self, base_dir: Path | None = None) -> Dataset:
        if self.kind == "csv":
            path = Path(self.path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_csv(path, self.label_column, self.fractions, self.seed)
        return generate_synthetic(
            self.kind, self.num_classes, self.n, self.noise, self.seed, self.dim, self.fractions
        )


@dataclass(frozen=True)
class RunConfig:
    data: DataSpec = field(default_factory=DataSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {"data": self.data.to_dict(), "model": self.model.to_dict(),
                "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping")
        _reject_unknown(data, cls, "config")
        try:
            return cls(
                DataSpec.from_dict(data.get("data", {})),
                ModelConfig.from_dict(data.get("model", {})),
                TrainConfig.from_dict(data.get("train", {})),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)


# --------------------------------------------------------------------------
# calibration-driven gamma bookkeeping


class BinnedGammaController:
    """Validation-bin boundaries plus the per-bin loss parameters.

    For ``adafocal`` the parameters are the signed scheduler gammas; for
    ``calfocal`` case 2 they are ``exp(lam * (C - A))`` per bin, and for
    case 1 the per-bin validation accuracies.
    """

    def __init__(self, spec: LossSpec):
        self.spec = spec
        self.config = spec.scheduler
        m = self.config.num_bins
        self.partition: BinPartition = equal_width_partition(m)
        self.table: GammaTable = init_gammas(self.config)
        self.bin_accuracy = np.full(m, np.nan)
        self.last_stats: BinStats | None = None

    @property
    def gammas(self) -> np.ndarray:
        return self.table.gammas

    def sample_loss(self, p: np.ndarray) -> losses.LossEval:
        idx = bin_index(p, self.partition)
        if self.spec.name == "calfocal" and self.spec.case == 1:
            acc = self.bin_accuracy[idx]
            known = ~np.isnan(acc)
            value, grad = losses.focal_loss(p, 1.0)
            value, grad = np.array(value, ndmin=1), np.array(grad, ndmin=1)
            if np.any(known):
                cf = losses.calfocal_case1_loss(p[known], acc[known], self.config.lam)
                value[known] = cf.value
                grad[known] = cf.dvalue_dp
            return losses.LossEval(value, grad)
        return losses.adafocal_loss(p, self.table.gammas[idx])

    def update(self, model: MlpModel, x_val: np.ndarray, y_val: np.ndarray, step: int) -> None:
        records = EvalBatch(softmax(forward(model, x_val)), y_val)
        self.partition = equal_mass_partition(records.top_conf, self.config.num_bins)
        stats = compute_bin_stats(records, self.partition, "top_conf")
        self.last_stats = stats
        if self.spec.name == "adafocal":
            self.table = update_gammas(self.table, stats, self.config, step)
            return
        filled = stats.occupied
        if self.spec.case == 1:
            self.bin_accuracy = np.where(filled, stats.accuracy, self.bin_accuracy)
            return
        gammas = self.table.gammas.copy()
        gammas[filled] = np.exp(self.config.lam * stats.error[filled])
        self.table = _append_plain(self.table, gammas, stats, step)


def _append_plain(table: GammaTable, gammas: np.ndarray, stats: BinStats, step: int) -> GammaTable:
    entry = GammaUpdate(step, tuple(float(g) for g in gammas), tuple(float(e) for e in stats.error))
    return GammaTable(gammas, [*table.history, entry], table.updates + 1)


# --------------------------------------------------------------------------
# loss on a batch of logits


def batch_loss_and_logit_grad(
    spec: LossSpec, logits: np.ndarray, labels: np.ndarray,
    controller: BinnedGammaController | None = None,
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not match")
    b, k = logits.shape
    probs = softmax(logits)
    rows = np.arange(b)

    if spec.name == "brier":
        ev = losses.brier_loss(probs, labels)
        return float(np.mean(ev.value)), logit_grad_from_prob_grad(probs, ev.dvalue_dp) / b
    if spec.name == "label_smoothing":
        q = np.full((b, k), spec.eps / k)
        q[rows, labels] += 1.0 - spec.eps
        value = -np.sum(q * log_softmax(logits), axis=1)
        return float(np.mean(value)), (probs - q) / b

    p = np.clip(probs[rows, labels], *PROB_CLAMP)
    if spec.name == "ce":
        ev = losses.cross_entropy(p)
    elif spec.name == "focal":
        ev = losses.focal_loss(p, spec.gamma)
    elif spec.name == "inverse_focal":
        ev = losses.inverse_focal_loss(p, spec.gamma)
    elif spec.name == "flsd53":
        ev = losses.focal_loss(p, flsd53_gamma(p))
    else:
        if controller is None:
            raise ValueError(f"{spec.name} needs a gamma controller")
        ev = controller.sample_loss(p)
    value = np.asarray(ev.value, dtype=np.float64)
    grad = np.asarray(ev.dvalue_dp, dtype=np.float64)
    return float(np.mean(value)), true_prob_grad_to_logit_grad(probs, grad / b, labels)


# --------------------------------------------------------------------------
# evaluation and training


def evaluate(model: MlpModel, features, labels) -> tuple[EvalBatch, float]:
    """Score a split; returns the records and the error rate."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"features {x.shape} do not match input dim {model.layer_dims[0]}")
    records = EvalBatch(softmax(forward(model, x)), labels)
    error = 1.0 - float(np.mean(records.correct)) if len(records) else float("nan")
    return records, error


def evaluate_split(model: MlpModel, dataset: Dataset, split: str) -> tuple[EvalBatch, float]:
    return evaluate(model, *dataset.split(split))


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    gamma_table: GammaTable | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.epochs)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainHistory":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


def _check_consistency(dataset: Dataset, config: TrainConfig) -> None:
    sizes = dataset.split_sizes()
    if config.epochs > 0 and sizes.get("train", 0) == 0:
        raise ConfigError("training split is empty", "data.fractions")
    if int(dataset.labels.max()) >= dataset.num_classes:
        raise ConfigError("labels exceed the number of classes", "data")
    if config.loss.name in BINNED_LOSSES:
        m = config.loss.scheduler.num_bins
        if sizes.get("val", 0) < m:
            raise ConfigError(
                f"validation split has {sizes.get('val', 0)} samples, fewer than {m} bins",
                "data.fractions",
            )


def _split_report(model: MlpModel, dataset: Dataset, split: str, num_bins: int):
    if not len(dataset.splits.get(split, ())):
        return None, None, None
    records, error = evaluate_split(model, dataset, split)
    return records, error, ece_report(records, num_bins).to_dict()


def train(
    dataset: Dataset, model_config: ModelConfig, config: TrainConfig
) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch SGD with momentum; one history entry per epoch.

    Binned losses update their gammas once per epoch after the parameter
    updates, or every ``update_every`` mini-batches when that is non-zero.
    """
    _check_consistency(dataset, config)
    spec = config.loss
    dims = [dataset.dim, *model_config.hidden, dataset.num_classes]
    model = init_mlp(dims, seed=config.seed)
    opt: OptimizerState = init_optimizer(model, config.lr_at(0), config.momentum)
    rng = np.random.default_rng(config.seed)
    x_tr, y_tr = dataset.split("train")
    x_val, y_val = dataset.split("val")
    controller = BinnedGammaController(spec) if spec.name in BINNED_LOSSES else None
    update_every = spec.scheduler.update_every if controller else 0

    history = TrainHistory(gamma_table=controller.table if controller else None)
    best: tuple[float, MlpModel] | None = None
    step = 0
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        opt = OptimizerState(lr, opt.momentum, opt.velocities)
        perm = rng.permutation(len(y_tr))
        loss_sum = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            trace = forward_trace(model, x_tr[idx])
            loss, dz = batch_loss_and_logit_grad(spec, trace[-1], y_tr[idx], controller)
            loss_sum += loss * len(idx)
            grads = backward(model, trace, dz)
            if config.weight_decay:
                grads.weights = [
                    g + config.weight_decay * w for g, w in zip(grads.weights, model.weights)
                ]
            model, opt = sgd_momentum_step(model, grads, opt)
            step += 1
            if controller and update_every and step % update_every == 0:
                controller.update(model, x_val, y_val, step)
        if controller and not update_every:
            controller.update(model, x_val, y_val, epoch + 1)

        val_records, val_error, val_ece = _split_report(model, dataset, "val", config.eval_bins)
        _, test_error, test_ece = _split_report(model, dataset, "test", config.eval_bins)
        entry = {
            "epoch": epoch + 1,
            "lr": lr,
            "train_loss": loss_sum / len(perm),
            "val_error": val_error,
            "test_error": test_error,
            "val_ece": val_ece,
            "test_ece": test_ece,
            "gammas": None,
            "val_bins": None,
        }
        if controller is not None:
            entry["gammas"] = [float(g) for g in controller.gammas]
            partition = controller.partition
        elif val_records is not None:
            partition = equal_mass_partition(
                val_records.top_conf, min(config.eval_bins, len(val_records))
            )
        if val_records is not None:
            entry["val_bins"] = compute_bin_stats(val_records, partition).to_rows()
        history.epochs.append(entry)

        if config.selection == "best_val_error" and val_error is not None:
            if best is None or val_error < best[0]:
                best = (val_error, model.copy())

    if controller is not None:
        history.gamma_table = controller.table
    if best is not None:
        model = best[1]
    return model, history
