"""Kernels, Gram matrices with jitter repair, and Gaussian-process draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelSpec",
    "GramMatrix",
    "KernelError",
    "kernel_eval",
    "kernel_matrix",
    "gram",
    "quadratic_form",
    "sample_gp",
]

JITTER_START = 1e-10
JITTER_MAX = 1e-2


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise KernelError(f"unknown kernel kind {self.kind!r}; expected 'linear' or 'rbf'")
        if self.kind == "rbf" and not self.gamma > 0:
            raise KernelError("rbf kernel requires gamma > 0")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.size} vs {y.size}")
    if spec.kind == "linear":
        return float(x @ y)
    diff = x - y
    return float(np.exp(-spec.gamma * (diff @ diff)))


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Cross-kernel matrix ``[K(a_i, b_j)]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    # direct differences, so identical points give exactly exp(0) = 1
    return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric kernel matrix and a lower Cholesky factor of
    ``values + jitter * I``."""

    values: np.ndarray
    jitter: float
    factor: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _mirror(M: np.ndarray) -> np.ndarray:
    # each off-diagonal entry taken once from the upper triangle
    return np.triu(M) + np.triu(M, 1).T


def gram(spec: KernelSpec, X) -> GramMatrix:
    """Gram matrix of the rows of ``X`` (or of a Dataset's features).

    Cholesky is attempted with no jitter, then with jitter 1e-10, 1e-9, ...
    up to 1e-2.  The jitter that succeeded is recorded.
    """
    X = getattr(X, "X", X)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise KernelError("cannot build a Gram matrix of an empty dataset")
    K = kernel_matrix(spec, X, X)
    if spec.kind == "rbf":
        np.fill_diagonal(K, 1.0)
    K = _mirror(K)
    K.setflags(write=False)

    eye = np.eye(K.shape[0])
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + jitter * eye if jitter else K)
            if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
                break
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise KernelError("Gram matrix not factorizable with jitter up to 1e-2 (kernel badly conditioned)")
    L.setflags(write=False)
    return GramMatrix(K, jitter, L)


def quadratic_form(g: GramMatrix, v) -> float:
    """``v' K v`` using the unjittered values."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != g.n:
        raise KernelError(f"vector length {v.size} differs from Gram size {g.n}")
    return float(v @ (g.values @ v))


def sample_gp(g: GramMatrix, mean, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, values + jitter * I)."""
    mean = np.asarray(mean, dtype=float).ravel()
    if mean.size != g.n:
        raise KernelError(f"mean length {mean.size} differs from Gram size {g.n}")
    return mean + g.factor @ rng.standard_normal(g.n)
