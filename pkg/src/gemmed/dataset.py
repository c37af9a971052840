"""Labeled samples, CSV ingestion, the ring-corrupted synthetic generator and
the bipartite reference/candidate split used by the k-NN entropy estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .streams import make_rng

__all__ = [
    "Sample",
    "Dataset",
    "SyntheticConfig",
    "BipartiteSplit",
    "DataError",
    "load_csv",
    "save_csv",
    "generate_synthetic",
    "bipartite_split",
    "round_half_up",
]

LABELS = (1, -1)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def round_half_up(x: float) -> int:
    # builtin round() is banker's rounding; counts here round .5 upward
    return int(math.floor(x + 0.5))


class Sample(NamedTuple):
    features: np.ndarray
    label: int
    anomaly_truth: bool | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of labeled feature vectors.

    Parameters
    ----------
    X : array of shape (n, p)
        Feature matrix.
    y : array of shape (n,)
        Labels in {-1, +1}.
    anomaly : array of shape (n,) of bool, optional
        Ground-truth anomaly flags.  Used for evaluation only.
    """

    X: np.ndarray
    y: np.ndarray
    anomaly: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=int).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DataError("dataset must be a nonempty (n, p) feature matrix")
        if y.shape[0] != X.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all((y == 1) | (y == -1)):
            raise DataError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.anomaly is not None:
            a = np.array(self.anomaly, dtype=bool).reshape(-1)
            if a.shape[0] != X.shape[0]:
                raise DataError("anomaly flags length differs from number of samples")
            a.setflags(write=False)
            object.__setattr__(self, "anomaly", a)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        if not samples:
            raise DataError("dataset must be nonempty")
        X = np.array([np.asarray(s.features, dtype=float) for s in samples])
        y = np.array([s.label for s in samples])
        flags = [s.anomaly_truth for s in samples]
        anomaly = None if all(f is None for f in flags) else np.array([bool(f) for f in flags])
        return cls(X, y, anomaly)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def samples(self) -> Iterator[Sample]:
        for i in range(len(self)):
            a = None if self.anomaly is None else bool(self.anomaly[i])
            yield Sample(self.X[i], int(self.y[i]), a)

    def class_indices(self, z: int) -> np.ndarray:
        return np.flatnonzero(self.y == z)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        a = None if self.anomaly is None else self.anomaly[idx]
        return Dataset(self.X[idx], self.y[idx], a)

    def require_both_labels(self) -> None:
        for z in LABELS:
            if not np.any(self.y == z):
                raise DataError(f"training requires samples of both labels; none with label {z:+d}")


# ---------------------------------------------------------------- CSV


def _parse_label(text: str, row: int) -> int:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}: label {text!r} is not numeric") from None
    if v == 1:
        return 1
    if v == -1 or v == 0:
        return -1
    raise DataError(f"row {row}: unknown label value {text!r} (expected -1/+1 or 0/1)")


def _parse_flag(text: str, row: int) -> bool:
    t = text.strip().lower()
    if t in ("1", "1.0", "true", "yes"):
        return True
    if t in ("0", "0.0", "false", "no", ""):
        return False
    raise DataError(f"row {row}: anomaly flag {text!r} is not boolean")


def load_csv(path, label_column: str = "y", anomaly_column: str | None = None) -> Dataset:
    """Read a dataset from a CSV file with a header row.

    Every column other than the label and anomaly columns is a numeric
    feature.  Labels may be given as -1/+1 or as 0/1, in which case 0 maps to
    -1.  Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        if anomaly_column is not None and anomaly_column not in header:
            raise DataError(f"{path}: anomaly column {anomaly_column!r} not in header {header}")
        li = header.index(label_column)
        ai = header.index(anomaly_column) if anomaly_column is not None else None
        feat = [i for i in range(len(header)) if i not in (li, ai)]
        if not feat:
            raise DataError(f"{path}: no feature columns")

        X, y, a = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no}: expected {len(header)} fields, found {len(row)} (inconsistent dimension)"
                )
            try:
                X.append([float(row[i]) for i in feat])
            except ValueError:
                raise DataError(f"row {row_no}: non-numeric feature value in {row}") from None
            y.append(_parse_label(row[li], row_no))
            if ai is not None:
                a.append(_parse_flag(row[ai], row_no))
    if not X:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(X), np.array(y), np.array(a) if ai is not None else None)


def save_csv(ds: Dataset, path, feature_prefix: str = "x") -> None:
    """Write ``ds`` with columns x1..xp, y[, anomaly].

    Floats are written with ``repr`` so a load reproduces them bit-exactly.
    """
    header = [f"{feature_prefix}{j + 1}" for j in range(ds.dim)] + ["y"]
    if ds.anomaly is not None:
        header.append("anomaly")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.X[i]] + [str(int(ds.y[i]))]
            if ds.anomaly is not None:
                row.append("1" if ds.anomaly[i] else "0")
            w.writerow(row)


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticConfig:
    """Two Gaussian classes at +/-mean_plus with a shared covariance, plus
    ring-shaped anomalies with random labels."""

    mean_plus: tuple = (3.0, 3.0)
    covariance: tuple = ((20.0, 16.0), (16.0, 20.0))
    n_per_class: int = 100
    corruption_rate: float = 0.2
    ring_inner_radius: float = 55.0
    ring_width: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        m = np.asarray(self.mean_plus, dtype=float)
        S = np.asarray(self.covariance, dtype=float)
        if m.ndim != 1 or S.shape != (m.size, m.size):
            raise ValueError("covariance must be a square matrix matching mean_plus")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        if int(self.n_per_class) < 1:
            raise ValueError("n_per_class must be a positive integer")
        if not 0.0 <= self.corruption_rate < 1.0:
            raise ValueError("corruption_rate must lie in [0, 1)")
        if self.ring_inner_radius <= 0 or self.ring_width <= 0:
            raise ValueError("ring radius and width must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Draw a corrupted two-class dataset.

    Each class z contributes ``round(n_per_class * (1 - r_a))`` nominal points
    from N(z * mean_plus, covariance).  The remaining ``2 * n_per_class`` minus
    nominal points are anomalies, uniform over the annulus
    ``R <= |x| <= R + width`` and labeled +/-1 with equal probability.  Rows
    are ordered: class +1 nominal, class -1 nominal, anomalies.
    """
    cfg.validate()
    rng = make_rng(int(cfg.seed), "generate_synthetic")
    m = np.asarray(cfg.mean_plus, dtype=float)
    L = np.linalg.cholesky(np.asarray(cfg.covariance, dtype=float))
    p = m.size
    n_nom = round_half_up(cfg.n_per_class * (1.0 - cfg.corruption_rate))
    n_anom = 2 * int(cfg.n_per_class) - 2 * n_nom

    X = [z * m + rng.standard_normal((n_nom, p)) @ L.T for z in LABELS]
    y = [np.full(n_nom, z) for z in LABELS]

    R, w = float(cfg.ring_inner_radius), float(cfg.ring_width)
    # area-uniform radius: density proportional to r on [R, R + w]
    r = np.sqrt(rng.uniform(R**2, (R + w) ** 2, n_anom))
    if p == 2:
        theta = rng.uniform(0.0, 2.0 * np.pi, n_anom)
        ring = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    else:
        # uniform direction on the sphere; the radius law above is exact only for p = 2
        u = rng.standard_normal((n_anom, p))
        ring = r[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)
    X.append(ring)
    y.append(np.where(rng.random(n_anom) < 0.5, 1, -1))

    anomaly = np.r_[np.zeros(2 * n_nom, dtype=bool), np.ones(n_anom, dtype=bool)]
    return Dataset(np.vstack(X), np.concatenate(y), anomaly)


# ---------------------------------------------------------------- bipartite split


@dataclass(frozen=True)
class BipartiteSplit:
    """Per-class partition into candidate (``part_n``) and reference
    (``part_m``) index sets."""

    part_n: dict = field(default_factory=dict)
    part_m: dict = field(default_factory=dict)
    split_fraction: float = 0.5


def bipartite_split(ds: Dataset, split_fraction: float = 0.5, seed: int = 0) -> BipartiteSplit:
    """Randomly split each class into reference and candidate parts.

    The reference part of a class with n samples has
    ``max(1, round(split_fraction * n))`` members, capped at n - 1 so the
    candidate part is never empty.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    rng = make_rng(int(seed), "bipartite_split")
    part_n, part_m = {}, {}
    for z in LABELS:
        idx = ds.class_indices(z)
        if idx.size < 2:
            raise DataError(f"class {z:+d} has {idx.size} samples; the bipartite split needs at least 2")
        m = min(max(1, round_half_up(split_fraction * idx.size)), idx.size - 1)
        perm = rng.permutation(idx)
        part_m[z] = np.sort(perm[:m])
        part_n[z] = np.sort(perm[m:])
    return BipartiteSplit(part_n, part_m, float(split_fraction))
