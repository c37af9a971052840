"""Bipartite k-NN geometric entropy minimization.

Each training sample is scored by its distance to the k-th nearest member of
its class's reference part.  The minimal-entropy set of a class is the
``round(beta_hat * n_z)`` samples with the smallest scores; its summed score
bounds the entropy constraint used by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import LABELS, BipartiteSplit, Dataset, DataError, round_half_up

__all__ = [
    "GemModel",
    "Detector",
    "knn_distance",
    "knn_distances",
    "loo_distances",
    "me_set_select",
    "fit_gem",
    "detect",
    "loo_threshold",
    "loo_detector",
    "NORMALIZATIONS",
]

NORMALIZATIONS = ("class_mean", "total", "none")


def knn_distances(queries, reference, k: int, exclude=None) -> np.ndarray:
    """k-th nearest Euclidean distance from each query row to ``reference``.

    ``exclude[i]``, if given and >= 0, is a row of ``reference`` ignored for
    query i (the query itself, for leave-one-out scoring).
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    R = np.atleast_2d(np.asarray(reference, dtype=float))
    if Q.shape[1] != R.shape[1]:
        raise DataError(f"dimension mismatch: {Q.shape[1]} vs {R.shape[1]}")
    avail = R.shape[0] - (0 if exclude is None else 1)
    if not 1 <= k <= avail:
        raise DataError(f"k={k} but only {avail} reference points available")
    D = cdist(Q, R)
    if exclude is not None:
        ex = np.asarray(exclude)
        rows = np.flatnonzero(ex >= 0)
        D[rows, ex[rows]] = np.inf
    return np.partition(D, k - 1, axis=1)[:, k - 1]


def knn_distance(query, reference, k: int) -> float:
    return float(knn_distances(np.atleast_2d(query), reference, k)[0])


def loo_distances(X, k: int) -> np.ndarray:
    """Leave-one-out k-NN distance of every row of ``X`` to the other rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < k + 1:
        raise DataError(f"leave-one-out with k={k} needs at least {k + 1} samples, got {X.shape[0]}")
    return knn_distances(X, X, k, exclude=np.arange(X.shape[0]))


def me_set_select(distances, K: int) -> np.ndarray:
    """Indices of the K smallest distances, ties going to the lower index.

    This is the exact minimizer of ``sum(eta * d)`` over binary eta with
    ``sum(eta) >= K``: extra members only add nonnegative terms.
    """
    d = np.asarray(distances, dtype=float).ravel()
    if not 1 <= K <= d.size:
        raise ValueError(f"K={K} out of range [1, {d.size}]")
    return np.sort(np.argsort(d, kind="stable")[:K])


@dataclass(frozen=True, eq=False)
class Detector:
    """k-NN distance detector: a query is anomalous for class z when its
    distance to the class reference exceeds ``thresholds[z]``."""

    k: int
    references: dict
    thresholds: dict


@dataclass(frozen=True, eq=False)
class GemModel:
    """Fitted bipartite k-NN entropy estimate for a training set.

    ``distances`` holds the raw k-NN score of every training sample;
    ``entropy_weights`` are those scores divided by the per-class ``scale``
    and are the per-sample quantities the entropy constraint sums.
    ``gamma_hat[z]`` bounds that sum for class z.
    """

    k: int
    labels: np.ndarray
    distances: np.ndarray
    selected: np.ndarray
    gamma_hat: dict
    beta_hat: float
    epsilon: dict
    threshold: dict
    scale: dict
    selected_count: dict
    normalization: str
    references: dict = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return self.labels.size

    @property
    def entropy_weights(self) -> np.ndarray:
        s = np.where(self.labels == 1, self.scale[1], self.scale[-1])
        return self.distances / s

    def coverage_target(self, z: int) -> float:
        """Fraction of the whole training set the class-z ME set occupies."""
        return self.selected_count[z] / self.n_total

    def detector(self) -> Detector:
        return Detector(self.k, self.references, self.threshold)


def fit_gem(
    ds: Dataset,
    split: BipartiteSplit,
    k: int = 5,
    beta_hat: float = 0.8,
    epsilon: float | None = None,
    normalization: str = "class_mean",
) -> GemModel:
    """Score every sample against its class reference part and select the
    per-class minimal-entropy set.

    Reference-part members are scored leave-one-out within the reference part,
    so each class reference needs at least ``k + 1`` points.

    ``normalization`` sets the per-class divisor applied to the distances
    before they enter the entropy constraint:

    * ``"class_mean"``: mean selected distance of the class (unit-free, so
      ``gamma_hat[z] = selected_count[z] + epsilon``),
    * ``"total"``: the training set size,
    * ``"none"``: raw distances.

    ``epsilon`` defaults to 1e-3 times the normalized optimal value.
    """
    if not 0.0 < beta_hat < 1.0:
        raise ValueError("beta_hat must lie in (0, 1)")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if epsilon is not None and not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = len(ds)
    d = np.zeros(n)
    selected = np.zeros(n, dtype=bool)
    gamma_hat, eps, thr, scale, count, refs = {}, {}, {}, {}, {}, {}
    for z in LABELS:
        idx = ds.class_indices(z)
        ref = np.asarray(split.part_m[z])
        if ref.size < k + 1:
            raise DataError(
                f"class {z:+d}: reference part has {ref.size} points, fewer than k + 1 = {k + 1}"
            )
        # position of each class member inside the reference part, or -1
        pos = np.full(n, -1)
        pos[ref] = np.arange(ref.size)
        d[idx] = knn_distances(ds.X[idx], ds.X[ref], k, exclude=pos[idx])

        K = max(1, round_half_up(beta_hat * idx.size))
        sel = idx[me_set_select(d[idx], K)]
        selected[sel] = True
        L = float(d[sel].sum())
        if normalization == "total":
            s = float(n)
        elif normalization == "none":
            s = 1.0
        else:
            s = L / K if L > 0 else 1.0
        Ln = L / s
        eps[z] = float(epsilon) if epsilon is not None else 1e-3 * max(Ln, 1e-9)
        gamma_hat[z] = Ln + eps[z]
        thr[z] = float(d[sel].max())
        scale[z] = s
        count[z] = K
        refs[z] = ds.X[ref]
    return GemModel(
        k=k,
        labels=np.array(ds.y),
        distances=d,
        selected=selected,
        gamma_hat=gamma_hat,
        beta_hat=float(beta_hat),
        epsilon=eps,
        threshold=thr,
        scale=scale,
        selected_count=count,
        normalization=normalization,
        references=refs,
    )


def detect(model, query, label: int | None = None) -> bool:
    """True when ``query`` is declared anomalous.

    With a known ``label`` the query is tested against that class only.
    Otherwise it is anomalous only if it is anomalous for both classes.
    """
    det = model.detector() if isinstance(model, GemModel) else model
    classes = LABELS if label is None else (int(label),)
    return all(
        knn_distance(query, det.references[z], det.k) > det.thresholds[z] for z in classes
    )


def loo_threshold(X, k: int, alpha: float) -> float:
    """(1 - alpha)-quantile of the leave-one-out k-NN distances of ``X``.

    ``alpha = 0`` returns the largest leave-one-out distance.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    X = getattr(X, "X", X)
    return float(np.quantile(loo_distances(X, k), 1.0 - alpha))


def loo_detector(ds: Dataset, k: int, alpha: float) -> Detector:
    """Per-class detector with target false-alarm rate ``alpha``; each class
    uses all of its samples as reference."""
    refs = {z: ds.X[ds.class_indices(z)] for z in LABELS}
    return Detector(k, refs, {z: loo_threshold(refs[z], k, alpha) for z in LABELS})
