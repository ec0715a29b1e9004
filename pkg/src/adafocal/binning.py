"""Confidence bins over (0, 1] and per-bin calibration statistics.

Bins are left-open and right-closed: bin ``i`` is ``(b_i, b_{i+1}]`` with
0-based indices, so a confidence of exactly 1 always falls in the last bin.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import DomainError, ShapeError

SCHEMES = ("equal_width", "equal_mass")
CONF_FIELDS = ("top_conf", "true_prob")


@dataclass(frozen=True)
class EvalRecord:
    """One scored example."""

    probs: tuple[float, ...]
    top_conf: float
    pred: int
    true_label: int
    true_prob: float
    correct: bool


class EvalBatch:
    """Column-oriented collection of :class:`EvalRecord` values.

    Holds the ``(N, K)`` probability matrix and labels; every other record
    field is derived from them on construction.
    """

    def __init__(self, probs, labels):
        probs = np.asarray(probs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.intp)
        if probs.ndim != 2 or labels.shape != (probs.shape[0],):
            raise ShapeError(f"probs {probs.shape} and labels {labels.shape} do not match")
        if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise DomainError("label out of range")
        self.probs = probs
        self.labels = labels
        rows = np.arange(len(labels))
        self.pred = np.argmax(probs, axis=1) if len(labels) else np.zeros(0, np.intp)
        self.top_conf = probs[rows, self.pred]
        self.true_prob = probs[rows, labels]
        self.correct = self.pred == labels

    @classmethod
    def from_records(cls, records: Iterable[EvalRecord]) -> "EvalBatch":
        records = list(records)
        if not records:
            return cls(np.zeros((0, 2)), np.zeros(0, np.intp))
        return cls([r.probs for r in records], [r.true_label for r in records])

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> EvalRecord:
        return EvalRecord(
            tuple(float(x) for x in self.probs[i]),
            float(self.top_conf[i]),
            int(self.pred[i]),
            int(self.labels[i]),
            float(self.true_prob[i]),
            bool(self.correct[i]),
        )

    def __iter__(self) -> Iterator[EvalRecord]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "EvalBatch":
        return EvalBatch(self.probs[idx], self.labels[idx])

    def confidences(self, conf_field: str = "top_conf") -> np.ndarray:
        if conf_field not in CONF_FIELDS:
            raise ValueError(f"conf_field must be one of {CONF_FIELDS}, got {conf_field!r}")
        return self.top_conf if conf_field == "top_conf" else self.true_prob


Records = Union[EvalBatch, Sequence[EvalRecord]]


def as_batch(records: Records) -> EvalBatch:
    if isinstance(records, EvalBatch):
        return records
    return EvalBatch.from_records(records)


@dataclass(frozen=True)
class BinPartition:
    boundaries: tuple[float, ...]
    scheme: str

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("need at least two boundaries")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValueError("boundaries must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        object.__setattr__(self, "boundaries", tuple(float(x) for x in b))

    @property
    def num_bins(self) -> int:
        return len(self.boundaries) - 1

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.boundaries[:-1])

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.boundaries[1:])


def equal_width_partition(num_bins: int) -> BinPartition:
    if num_bins < 1:
        raise ValueError(f"need at least one bin, got {num_bins}")
    return BinPartition(tuple(np.arange(num_bins + 1) / num_bins), "equal_width")


def equal_mass_partition(confidences, num_bins: int) -> BinPartition:
    """Quantile bins holding (nearly) equal numbers of confidences.

    With sorted values ``v``, the cut after the first ``floor(i*N/M)`` values
    sits at the midpoint of its two neighbours. Tied values end up together
    in the lower bin; where ties collapse cuts, the colliding boundaries are
    nudged apart by one ulp, leaving empty bins.
    """
    v = np.sort(np.asarray(confidences, dtype=np.float64).ravel())
    n = v.size
    if num_bins < 1:
        raise ValueError(f"need at least one bin, got {num_bins}")
    if n < num_bins:
        raise ValueError(f"{n} confidences cannot fill {num_bins} equal-mass bins")
    if np.any(~(v > 0.0)) or np.any(v > 1.0):
        raise DomainError("confidences must lie in (0, 1]")
    b = np.empty(num_bins + 1)
    b[0], b[-1] = 0.0, 1.0
    for i in range(1, num_bins):
        j = (i * n) // num_bins
        b[i] = 0.5 * (v[j - 1] + v[j])
    for i in range(1, num_bins):
        if b[i] <= b[i - 1]:
            b[i] = np.nextafter(b[i - 1], np.inf)
    for i in range(num_bins - 1, 0, -1):
        if b[i] >= b[i + 1]:
            b[i] = np.nextafter(b[i + 1], -np.inf)
    return BinPartition(tuple(b), "equal_mass")


def make_partition(confidences, num_bins: int, scheme: str) -> BinPartition:
    if scheme == "equal_width":
        return equal_width_partition(num_bins)
    if scheme == "equal_mass":
        return equal_mass_partition(confidences, num_bins)
    raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def bin_index(p, partition: BinPartition):
    """Index ``i`` with ``b_i < p <= b_{i+1}``; vectorised over arrays."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~(arr > 0.0)) or np.any(arr > 1.0):
        raise DomainError("confidence must lie in (0, 1]")
    idx = np.searchsorted(np.asarray(partition.boundaries), arr, side="left") - 1
    return int(idx) if idx.ndim == 0 else idx


@dataclass
class BinStats:
    """Per-bin count, mean confidence ``C``, accuracy ``A`` and ``E = C - A``.

    Empty bins carry NaN in the three mean fields; see :attr:`occupied`.
    """

    partition: BinPartition
    counts: np.ndarray
    mean_conf: np.ndarray
    accuracy: np.ndarray
    error: np.ndarray
    total: int
    conf_field: str = "top_conf"

    @property
    def num_bins(self) -> int:
        return len(self.counts)

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    def to_rows(self) -> list[dict]:
        rows = []
        for i in range(self.num_bins):
            filled = bool(self.counts[i])
            rows.append(
                {
                    "bin": i,
                    "lower": self.partition.boundaries[i],
                    "upper": self.partition.boundaries[i + 1],
                    "count": int(self.counts[i]),
                    "conf": float(self.mean_conf[i]) if filled else None,
                    "acc": float(self.accuracy[i]) if filled else None,
                    "error": float(self.error[i]) if filled else None,
                }
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, ["bin", "lower", "upper", "count", "conf", "acc", "error"], lineterminator="\n"
        )
        writer.writeheader()
        for row in self.to_rows():
            writer.writerow({k: ("" if v is None else repr(v)) for k, v in row.items()})
        return buf.getvalue()


def compute_bin_stats(
    records: Records, partition: BinPartition, conf_field: str = "top_conf"
) -> BinStats:
    batch = as_batch(records)
    if len(batch) == 0:
        raise ValueError("cannot compute bin statistics of an empty record set")
    conf = batch.confidences(conf_field)
    correct = batch.correct.astype(np.float64)
    idx = bin_index(conf, partition)
    m = partition.num_bins
    counts = np.zeros(m, dtype=np.int64)
    mean_conf = np.full(m, np.nan)
    accuracy = np.full(m, np.nan)
    for i in range(m):
        mask = idx == i
        counts[i] = np.count_nonzero(mask)
        if counts[i]:
            mean_conf[i] = np.mean(conf[mask])
            accuracy[i] = np.mean(correct[mask])
    return BinStats(
        partition, counts, mean_conf, accuracy, mean_conf - accuracy, len(batch), conf_field
    )
