"""Datasets: synthetic generators, CSV loading and seeded train/val/test splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)
SYNTHETIC_KINDS = ("gauss_mixture", "rings")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: dict[str, np.ndarray]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.splits:
            raise KeyError(f"unknown split {name!r}; have {sorted(self.splits)}")
        idx = self.splits[name]
        return self.features[idx], self.labels[idx]

    def split_sizes(self) -> dict[str, int]:
        return {k: int(len(v)) for k, v in self.splits.items()}


def split_indices(n: int, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded permutation cut into train/val/test.

    Val and test sizes are ``round(f * n)``; train takes the remainder.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError(f"need three non-negative split fractions, got {fractions}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"split fractions must sum to 1, got {sum(fractions)}")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_train = n - n_val - n_test
    return {
        "train": perm[:n_train],
        "val": perm[n_train : n_train + n_val],
        "test": perm[n_train + n_val :],
    }


def class_means(num_classes: int, dim: int, radius: float = 1.0) -> np.ndarray:
    """Class centres evenly spaced on a circle in the first two coordinates."""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def sample_features(
    kind: str, labels: np.ndarray, num_classes: int, noise: float, dim: int,
    rng: np.random.Generator, offset=None,
) -> np.ndarray:
    n = len(labels)
    if kind == "gauss_mixture":
        x = class_means(num_classes, dim)[labels] + noise * rng.standard_normal((n, dim))
    elif kind == "rings":
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        r = labels + 1.0 + noise * rng.standard_normal(n)
        x = noise * rng.standard_normal((n, dim))
        x[:, 0] = r * np.cos(theta)
        x[:, 1] = r * np.sin(theta)
    else:
        raise ValueError(f"kind must be one of {SYNTHETIC_KINDS}, got {kind!r}")
    if offset is not None:
        x = x + np.asarray(offset, dtype=np.float64)
    return x


def balanced_labels(num_classes: int, n: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.full(num_classes, n // num_classes)
    counts[: n % num_classes] += 1
    return rng.permutation(np.repeat(np.arange(num_classes), counts))


def generate_synthetic(
    kind: str,
    num_classes: int,
    n: int,
    noise: float,
    seed: int,
    dim: int = 2,
    fractions=DEFAULT_FRACTIONS,
) -> Dataset:
    """Balanced synthetic classification data.

    ``gauss_mixture`` puts class centres on the unit circle and adds isotropic
    Gaussian noise with standard deviation ``noise``; ``rings`` draws class
    ``k`` on a circle of radius ``k + 1`` with radial jitter.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"kind must be one of {SYNTHETIC_KINDS}, got {kind!r}")
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if n < num_classes:
        raise ValueError(f"n={n} is smaller than the number of classes")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    labels = balanced_labels(num_classes, n, rng)
    x = sample_features(kind, labels, num_classes, noise, dim, rng)
    return Dataset(x, labels.astype(np.intp), num_classes, split_indices(n, fractions, seed))


def read_csv_table(path, label_column: str | None = "label"):
    """Parse a numeric CSV with a header row.

    Returns ``(features, labels, feature_names)``; ``labels`` is ``None``
    when ``label_column`` is ``None`` or absent from the header.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataFormatError("file is empty", row=1) from None
            rows = list(reader)
    except DataFormatError:
        raise
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    label_idx = header.index(label_column) if label_column in header else None
    feature_cols = [i for i in range(len(header)) if i != label_idx]
    if not feature_cols:
        raise DataFormatError("no feature columns", row=1)
    feats, labels = [], []
    for r, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} cells, got {len(row)}", row=r)
        values = []
        for i, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(f"not a number: {cell!r}", row=r, column=header[i]) from None
            if not math.isfinite(v):
                raise DataFormatError(f"non-finite value {cell!r}", row=r, column=header[i])
            values.append(v)
        if label_idx is not None:
            lab = values[label_idx]
            if lab != int(lab) or lab < 0:
                raise DataFormatError(
                    f"label must be a non-negative integer, got {row[label_idx]!r}",
                    row=r, column=header[label_idx],
                )
            labels.append(int(lab))
        feats.append([values[i] for i in feature_cols])
    if not feats:
        raise DataFormatError("no data rows")
    x = np.asarray(feats, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp) if label_idx is not None else None
    return x, y, [header[i] for i in feature_cols]


def load_csv(
    path, label_column: str = "label", fractions=DEFAULT_FRACTIONS, seed: int = 0
) -> Dataset:
    x, y, _ = read_csv_table(path, label_column)
    if y is None:
        raise DataFormatError(f"label column {label_column!r} not found", row=1)
    num_classes = max(int(y.max()) + 1, 2)
    return Dataset(x, y, num_classes, split_indices(len(y), fractions, seed))


def write_csv(path, features: np.ndarray, labels: np.ndarray | None = None,
              label_column: str = "label") -> None:
    features = np.asarray(features, dtype=np.float64)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"x{i}" for i in range(features.shape[1])]
        w.writerow(header + ([label_column] if labels is not None else []))
        for i, row in enumerate(features):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            w.writerow(cells)


def generate_ood(num_classes: int, n: int, noise: float, seed: int, dim: int = 2) -> np.ndarray:
    """Out-of-distribution features for the ``gauss_mixture`` task.

    Every class centre is moved onto the centroid of all centres, the point
    farthest from all of them at once, and ``n`` samples are drawn there with
    the same isotropic noise. Points far out along any single direction are
    a poor OOD probe for ReLU networks, whose logits grow linearly there and
    make predictions more confident rather than less.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    centre = class_means(num_classes, dim).mean(axis=0)
    return centre + noise * rng.standard_normal((n, dim))
