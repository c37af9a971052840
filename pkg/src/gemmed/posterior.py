"""Joint posterior over the decision values f and the nominality indicators
eta.

Given f, the eta_n are independent Bernoulli variables whose log-odds are
computed by :func:`eta_logit`.  Given eta, f at the training points is
Gaussian with mean ``K (lam * eta * y)`` and covariance ``K``.
:func:`gibbs_run` alternates the two, and :func:`exact_posterior` sums over
all eta configurations in closed form for small problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .dataset import LABELS
from .dual import DualState, per_sample
from .kernel import GramMatrix

__all__ = [
    "PriorConfig",
    "Expectations",
    "PosteriorEstimate",
    "ExactPosterior",
    "PosteriorError",
    "eta_logit",
    "eta_logits",
    "f_mean",
    "sample_eta",
    "gibbs_run",
    "exact_posterior",
    "MAX_EXACT_N",
]

MAX_EXACT_N = 12


class PosteriorError(RuntimeError):
    pass


@dataclass(frozen=True)
class PriorConfig:
    """Prior on the indicators and the form of their conditional.

    Parameters
    ----------
    a_eta : float
        Prior log-odds of eta_n = 1.
    logit_form : {"additive", "product"}
        ``"additive"`` adds the prior log-odds to the constraint terms, which
        is the conditional of the joint Gibbs density.  ``"product"``
        multiplies the constraint terms by ``log((1 - p0) / p0)``; it has no
        joint density and is kept only for comparison.
    margin_offset : bool
        Subtract ``lam_n`` (the unit margin) inside the logit.  The joint
        density behind the dual objective has no such term, so the sampler
        and the exact oracle agree with the trainer's gradients only when
        this is off.
    kappa_scaled : bool
        Scale the coverage multiplier by ``1/|T|`` in the logit.
    """

    a_eta: float = 4.0
    logit_form: str = "additive"
    margin_offset: bool = False
    kappa_scaled: bool = True

    def __post_init__(self):
        if self.logit_form not in ("additive", "product"):
            raise ValueError("logit_form must be 'additive' or 'product'")
        if not np.isfinite(self.a_eta):
            raise ValueError("a_eta must be finite")

    @property
    def prior_eta1(self) -> float:
        return 1.0 / (1.0 + np.exp(-self.a_eta))


@dataclass(frozen=True, eq=False)
class Expectations:
    """Posterior expectations the dual gradients need.

    ``margin[n]`` is E[eta_n y_n f_n]; ``entropy[z]`` is E[sum over class z of
    eta_n h_n]; ``coverage[z]`` is E[sum over class z of eta_n].
    """

    margin: np.ndarray
    entropy: dict
    coverage: dict


@dataclass(frozen=True, eq=False)
class PosteriorEstimate:
    eta_hat: np.ndarray
    f_hat: np.ndarray
    sweeps: int
    inner_replicates: int
    expectations: Expectations
    eta_mean: np.ndarray


@dataclass(frozen=True, eq=False)
class ExactPosterior:
    """Exact expectations plus ``log_w``, the log of the eta-sum
    ``sum_eta p0(eta) exp(Q(K, lam*eta*y)/2 + eta'b)``."""

    expectations: Expectations
    eta_marginals: np.ndarray
    f_mean: np.ndarray
    log_w: float

    def dual_objective(self, dual: DualState, c: float, gamma_hat: dict, coverage_target: dict) -> float:
        """Dual objective value ``-log Z`` at ``dual``."""
        lam = dual.lam
        explicit = float(np.sum(lam + np.log1p(-lam / c)))
        explicit -= sum(dual.mu[z] * gamma_hat[z] for z in LABELS)
        explicit += sum(dual.kappa[z] * coverage_target[z] for z in LABELS)
        return explicit - self.log_w


def _kappa_factor(prior: PriorConfig, T: int) -> float:
    return 1.0 / T if prior.kappa_scaled else 1.0


def eta_logits(f, dual: DualState, prior: PriorConfig, h, y, T: int) -> np.ndarray:
    """Vector of log-odds of eta_n = 1 given decision values ``f``."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    lam = dual.lam
    offset = 1.0 if (prior.margin_offset or prior.logit_form == "product") else 0.0
    F = (
        lam * (y * f - offset)
        - per_sample(dual.mu, y) * h
        + per_sample(dual.kappa, y) * _kappa_factor(prior, T)
    )
    if prior.logit_form == "product":
        return -prior.a_eta * F
    return prior.a_eta + F


def eta_logit(n: int, f_n: float, dual: DualState, prior: PriorConfig, d_n: float, y_n: int, T: int) -> float:
    """Log-odds of eta_n = 1 given ``f(x_n) = f_n``.

    ``a_eta + lam_n (y_n f_n - o) - mu_{y_n} d_n + kappa_{y_n} / T`` where o
    is 1 with ``prior.margin_offset`` and 0 otherwise.
    """
    lam = dual.lam[n]
    offset = 1.0 if (prior.margin_offset or prior.logit_form == "product") else 0.0
    F = lam * (y_n * f_n - offset) - dual.mu[y_n] * d_n + dual.kappa[y_n] * _kappa_factor(prior, T)
    if prior.logit_form == "product":
        return float(-prior.a_eta * F)
    return float(prior.a_eta + F)


def f_mean(dual: DualState, eta, labels, g: GramMatrix) -> np.ndarray:
    """Conditional mean ``K (lam * eta * y)`` of f given eta.

    ``eta`` may be a single vector or a stack of rows, one per replicate.
    """
    w = np.asarray(eta, dtype=float) * (dual.lam * np.asarray(labels, dtype=float))
    return w @ g.values


def sample_eta(logits, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """``size`` independent rows of Bernoulli(sigmoid(logits)) indicators."""
    p = expit(np.asarray(logits, dtype=float))
    return (rng.random((size, p.size)) < p).astype(float)


def _class_sums(E: np.ndarray, h: np.ndarray, labels: np.ndarray):
    entropy, coverage = {}, {}
    for z in LABELS:
        m = labels == z
        entropy[z] = E[:, m] @ h[m]
        coverage[z] = E[:, m].sum(axis=1)
    return entropy, coverage


def gibbs_run(
    g: GramMatrix,
    dual: DualState,
    prior: PriorConfig,
    distances,
    labels,
    sweeps: int,
    inner_replicates: int,
    rng: np.random.Generator,
    T: int | None = None,
    f_mean_source: str = "mean",
) -> PosteriorEstimate:
    """Gibbs estimate of the posterior expectations.

    Starting from eta_hat = 1, each sweep t draws f_t from the Gaussian
    process with mean ``K (lam * eta_hat_{t-1} * y)``, then draws
    ``inner_replicates`` independent indicator vectors given f_t;
    ``eta_hat_t`` is their mean.  The expectations are running averages over
    sweeps of replicate averages, with f replaced by its conditional mean
    given each replicate.

    ``f_mean_source="binary"`` feeds the last binary replicate, rather than
    the real-valued mean, into the next f draw, which makes the chain an
    exact Gibbs sampler of the joint posterior.
    """
    if sweeps < 1 or inner_replicates < 1:
        raise ValueError("sweeps and inner_replicates must be at least 1")
    if f_mean_source not in ("mean", "binary"):
        raise ValueError("f_mean_source must be 'mean' or 'binary'")
    y = np.asarray(labels, dtype=float)
    h = np.asarray(distances, dtype=float)
    N = y.size
    T = N if T is None else T
    ly = dual.lam * y

    eta_hat = np.ones(N)
    base = eta_hat
    margin = np.zeros(N)
    f_hat = np.zeros(N)
    eta_mean = np.zeros(N)
    entropy = {z: 0.0 for z in LABELS}
    coverage = {z: 0.0 for z in LABELS}
    for t in range(1, sweeps + 1):
        f = (base * ly) @ g.values + g.factor @ rng.standard_normal(N)
        E = sample_eta(eta_logits(f, dual, prior, h, y, T), rng, inner_replicates)
        eta_hat = E.mean(axis=0)
        base = eta_hat if f_mean_source == "mean" else E[-1]

        fm = (E * ly) @ g.values
        w = 1.0 / t
        margin += w * ((E * y * fm).mean(axis=0) - margin)
        f_hat += w * (fm.mean(axis=0) - f_hat)
        eta_mean += w * (eta_hat - eta_mean)
        ent, cov = _class_sums(E, h, y)
        for z in LABELS:
            entropy[z] += w * (ent[z].mean() - entropy[z])
            coverage[z] += w * (cov[z].mean() - coverage[z])
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(margin))):
            raise PosteriorError(f"non-finite values in Gibbs sweep {t}")

    return PosteriorEstimate(
        eta_hat=eta_hat,
        f_hat=f_hat,
        sweeps=sweeps,
        inner_replicates=inner_replicates,
        expectations=Expectations(margin, entropy, coverage),
        eta_mean=eta_mean,
    )


def exact_posterior(
    g: GramMatrix,
    dual: DualState,
    prior: PriorConfig,
    distances,
    labels,
    T: int | None = None,
) -> ExactPosterior:
    """Enumerate all 2^N indicator configurations (N <= 12).

    Integrating f out leaves each configuration with weight
    ``p0(eta) exp(Q(K, lam*eta*y)/2 + sum_n eta_n b_n)``, where
    ``b_n = -mu_{y_n} h_n + kappa_{y_n}/T`` (minus ``lam_n`` with the margin
    offset), and E[f | eta] = K (lam * eta * y).
    """
    y = np.asarray(labels, dtype=float)
    h = np.asarray(distances, dtype=float)
    N = y.size
    if N > MAX_EXACT_N:
        raise PosteriorError(f"exact enumeration refused for N={N} > {MAX_EXACT_N}")
    if prior.logit_form != "additive":
        raise PosteriorError("the product logit form has no joint density to enumerate")
    T = N if T is None else T

    E = np.array(list(itertools.product((0.0, 1.0), repeat=N)))
    V = E * (dual.lam * y)
    fm = V @ g.values
    b = -per_sample(dual.mu, y) * h + per_sample(dual.kappa, y) * _kappa_factor(prior, T)
    if prior.margin_offset:
        b = b - dual.lam
    log_p1 = -np.logaddexp(0.0, -prior.a_eta)
    log_p0 = -np.logaddexp(0.0, prior.a_eta)
    logw = E.sum(1) * log_p1 + (N - E.sum(1)) * log_p0 + 0.5 * (V * fm).sum(1) + E @ b
    log_w = float(logsumexp(logw))
    w = np.exp(logw - log_w)

    ent, cov = _class_sums(E, h, y)
    ex = Expectations(
        margin=w @ (E * y * fm),
        entropy={z: float(w @ ent[z]) for z in LABELS},
        coverage={z: float(w @ cov[z]) for z in LABELS},
    )
    return ExactPosterior(ex, eta_marginals=w @ E, f_mean=w @ fm, log_w=log_w)
