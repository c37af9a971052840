from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LABELS

__all__ = ["DualState", "per_sample"]


def per_sample(values: dict, labels) -> np.ndarray:
    """Broadcast a per-class ``{+1: a, -1: b}`` mapping onto ``labels``."""
    labels = np.asarray(labels)
    return np.where(labels == 1, values[1], values[-1]).astype(float)


@dataclass(frozen=True, eq=False)
class DualState:
    """Multipliers of the margin (``lam``, per sample), entropy (``mu``, per
    class) and coverage (``kappa``, per class) constraints."""

    lam: np.ndarray
    mu: dict
    kappa: dict

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).ravel()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", {z: float(self.mu[z]) for z in LABELS})
        object.__setattr__(self, "kappa", {z: float(self.kappa[z]) for z in LABELS})

    @classmethod
    def zeros(cls, n: int) -> "DualState":
        return cls(np.zeros(n), {1: 0.0, -1: 0.0}, {1: 0.0, -1: 0.0})

    def check_feasible(self, C1: float | None = None, c: float | None = None) -> None:
        if np.any(self.lam < 0) or (C1 is not None and np.any(self.lam > C1)):
            raise ValueError("lambda outside [0, C1]")
        if c is not None and np.any(self.lam >= c):
            raise ValueError("lambda must stay strictly below the slack rate c")
        if any(self.mu[z] < 0 or self.kappa[z] < 0 for z in LABELS):
            raise ValueError("mu and kappa must be nonnegative")

    def as_vector(self) -> np.ndarray:
        return np.r_[self.lam, self.mu[1], self.mu[-1], self.kappa[1], self.kappa[-1]]

    @classmethod
    def from_vector(cls, v) -> "DualState":
        v = np.asarray(v, dtype=float)
        return cls(v[:-4], {1: v[-4], -1: v[-3]}, {1: v[-2], -1: v[-1]})
