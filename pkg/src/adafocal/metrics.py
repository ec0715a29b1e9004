"""Calibration estimators, reliability data, entropy and AUROC."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .binning import (
    BinPartition,
    EvalBatch,
    Records,
    as_batch,
    compute_bin_stats,
    make_partition,
)

DEFAULT_BINS = 15
_SCHEME_ALIASES = {"ew": "equal_width", "em": "equal_mass"}


def _scheme(name: str) -> str:
    return _SCHEME_ALIASES.get(name, name)


def _nonempty(records: Records) -> EvalBatch:
    batch = as_batch(records)
    if len(batch) == 0:
        raise ValueError("need at least one record")
    return batch


def _bin_sums(conf: np.ndarray, correct: np.ndarray, partition: BinPartition):
    idx = np.searchsorted(np.asarray(partition.boundaries), conf, side="left") - 1
    m = partition.num_bins
    counts = np.bincount(idx, minlength=m)
    conf_sum = np.bincount(idx, weights=conf, minlength=m)
    acc_sum = np.bincount(idx, weights=correct, minlength=m)
    return counts, conf_sum, acc_sum


def _ece_from_sums(counts, conf_sum, acc_sum, n: int) -> float:
    filled = counts > 0
    gap = np.abs(conf_sum[filled] - acc_sum[filled]) / counts[filled]
    return float(np.sum(counts[filled] / n * gap))


def _ece(batch: EvalBatch, num_bins: int, scheme: str) -> float:
    conf = batch.top_conf
    partition = make_partition(conf, num_bins, scheme)
    return _ece_from_sums(*_bin_sums(conf, batch.correct.astype(float), partition), len(batch))


def ece_ew(records: Records, num_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error over equal-width bins of top-class confidence."""
    return _ece(_nonempty(records), num_bins, "equal_width")


def ece_em(records: Records, num_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error over equal-mass bins of top-class confidence.

    With fewer records than bins, one bin per record is used.
    """
    batch = _nonempty(records)
    return _ece(batch, min(num_bins, len(batch)), "equal_mass")


def ece_debias(
    records: Records, num_bins: int = DEFAULT_BINS, scheme: str = "equal_mass"
) -> float:
    """Debiased l2 calibration error.

    Per bin ``b`` with ``n_b >= 2`` records, the plugin ``(C_b - A_b)^2`` is
    reduced by ``A_b (1 - A_b) / (n_b - 1)``, the unbiased estimate of the
    sampling variance of ``A_b``. Bins with a single record contribute zero.
    The terms are averaged with weights ``n_b / N``; the total is floored at
    zero and square-rooted.

    The floor is applied once to the total. Flooring each bin keeps only the
    positive half of every zero-centred term and biases the estimate upward
    on calibrated data.
    """
    batch = _nonempty(records)
    scheme = _scheme(scheme)
    m = min(num_bins, len(batch)) if scheme == "equal_mass" else num_bins
    conf = batch.top_conf
    counts, conf_sum, acc_sum = _bin_sums(
        conf, batch.correct.astype(float), make_partition(conf, m, scheme)
    )
    total = 0.0
    for n_b, cs, as_ in zip(counts, conf_sum, acc_sum):
        if n_b < 2:
            continue
        c, a = cs / n_b, as_ / n_b
        term = (c - a) ** 2 - a * (1.0 - a) / (n_b - 1)
        total += n_b / len(batch) * term
    return math.sqrt(max(total, 0.0))


def ece_sweep_bins(records: Records, scheme: str = "equal_mass") -> tuple[float, int]:
    """ECE at the largest monotone bin count, and that bin count.

    Starting from one bin, the bin count grows while the accuracies of the
    occupied bins stay non-decreasing in bin order; the sweep stops at the
    first count that breaks monotonicity.
    """
    batch = _nonempty(records)
    scheme = _scheme(scheme)
    conf = batch.top_conf
    correct = batch.correct.astype(float)
    n = len(batch)
    best = _ece_from_sums(*_bin_sums(conf, correct, make_partition(conf, 1, scheme)), n)
    best_m = 1
    for m in range(2, n + 1):
        counts, conf_sum, acc_sum = _bin_sums(conf, correct, make_partition(conf, m, scheme))
        filled = counts > 0
        accs = acc_sum[filled] / counts[filled]
        if np.any(np.diff(accs) < 0):
            break
        best, best_m = _ece_from_sums(counts, conf_sum, acc_sum, n), m
    return best, best_m


def ece_sweep(records: Records, scheme: str = "equal_mass") -> float:
    return ece_sweep_bins(records, scheme)[0]


@dataclass
class EceReport:
    ece_ew: float
    ece_em: float
    ece_debias: float
    ece_sweep_ew: float
    ece_sweep_em: float
    num_bins: dict

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EceReport":
        return cls(**data)


def ece_report(records: Records, num_bins: int = DEFAULT_BINS) -> EceReport:
    batch = _nonempty(records)
    sweep_ew, m_ew = ece_sweep_bins(batch, "equal_width")
    sweep_em, m_em = ece_sweep_bins(batch, "equal_mass")
    m_em_plain = min(num_bins, len(batch))
    return EceReport(
        ece_ew=ece_ew(batch, num_bins),
        ece_em=ece_em(batch, num_bins),
        ece_debias=ece_debias(batch, num_bins),
        ece_sweep_ew=sweep_ew,
        ece_sweep_em=sweep_em,
        num_bins={
            "ece_ew": num_bins,
            "ece_em": m_em_plain,
            "ece_debias": m_em_plain,
            "ece_sweep_ew": m_ew,
            "ece_sweep_em": m_em,
        },
    )


RELIABILITY_HEADER = ["bin", "lower", "upper", "count", "conf", "acc"]


@dataclass(frozen=True)
class ReliabilityRow:
    bin: int
    lower: float
    upper: float
    count: int
    conf: float | None
    acc: float | None


def reliability_data(
    records: Records, num_bins: int = DEFAULT_BINS, scheme: str = "equal_mass"
) -> list[ReliabilityRow]:
    batch = _nonempty(records)
    scheme = _scheme(scheme)
    if scheme == "equal_mass":
        num_bins = min(num_bins, len(batch))
    stats = compute_bin_stats(batch, make_partition(batch.top_conf, num_bins, scheme))
    return [
        ReliabilityRow(r["bin"], r["lower"], r["upper"], r["count"], r["conf"], r["acc"])
        for r in stats.to_rows()
    ]


def reliability_csv(rows: list[ReliabilityRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RELIABILITY_HEADER)
    for r in rows:
        w.writerow(
            [
                r.bin,
                repr(r.lower),
                repr(r.upper),
                r.count,
                "" if r.conf is None else repr(r.conf),
                "" if r.acc is None else repr(r.acc),
            ]
        )
    return buf.getvalue()


def parse_reliability_csv(text: str) -> list[ReliabilityRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != RELIABILITY_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")

    def opt(s):
        return None if s == "" else float(s)

    return [
        ReliabilityRow(
            int(r["bin"]), float(r["lower"]), float(r["upper"]), int(r["count"]),
            opt(r["conf"]), opt(r["acc"]),
        )
        for r in reader
    ]


def entropy(probs) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis, with ``0 log 0 = 0``."""
    p = np.asarray(probs, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    h = -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


def _scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def auroc(in_scores, out_scores) -> float:
    """P(out score > in score) + 0.5 P(tie), via the Mann-Whitney rank sum."""
    s_in = _scores(in_scores, "in_scores")
    s_out = _scores(out_scores, "out_scores")
    ranks = rankdata(np.concatenate([s_in, s_out]))
    n_in, n_out = s_in.size, s_out.size
    u = ranks[n_in:].sum() - n_out * (n_out + 1) / 2.0
    return float(u / (n_in * n_out))


@dataclass
class RocCurve:
    fpr: list[float]
    tpr: list[float]
    thresholds: list[float | None]
    auroc: float

    def to_dict(self) -> dict:
        return asdict(self)


def roc_curve(in_scores, out_scores) -> RocCurve:
    """ROC treating out-of-distribution as the positive class.

    One point per distinct score (descending), flagging every sample with a
    score at or above it; the curve starts at ``(0, 0)`` and ends at ``(1, 1)``.
    """
    s_in = _scores(in_scores, "in_scores")
    s_out = _scores(out_scores, "out_scores")
    thresholds = np.unique(np.concatenate([s_in, s_out]))[::-1]
    in_sorted = np.sort(s_in)
    out_sorted = np.sort(s_out)
    fpr = [0.0]
    tpr = [0.0]
    for t in thresholds:
        fpr.append((s_in.size - np.searchsorted(in_sorted, t, side="left")) / s_in.size)
        tpr.append((s_out.size - np.searchsorted(out_sorted, t, side="left")) / s_out.size)
    return RocCurve(
        [float(x) for x in fpr],
        [float(x) for x in tpr],
        [None] + [float(t) for t in thresholds],
        auroc(s_in, s_out),
    )
