"""Projected stochastic gradient ascent on the GEM-MED dual."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LABELS, Dataset, DataError
from .dual import DualState
from .gem import GemModel
from .kernel import KernelSpec, gram, kernel_matrix
from .posterior import (
    Expectations,
    PriorConfig,
    exact_posterior,
    gibbs_run,
)
from .streams import make_rng

__all__ = [
    "TrainConfig",
    "TrainedModel",
    "TrainingError",
    "ModelFormatError",
    "dual_gradients",
    "psgd_step",
    "train",
    "med_expectations",
    "mean_field_objective",
    "save_model",
    "load_model",
    "MODEL_HEADER",
]

MODEL_HEADER = "gemmed-model v1"


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings.

    ``beta_hat`` is the per-class coverage target in the kappa gradient.  When
    None each class uses the fraction of the training set its GEM
    minimal-entropy set occupies, ``selected_count[z] / |T|``.
    """

    C1: float = 1.0
    c: float = 10.0
    lr_lambda: float = 2e-3
    lr_mu: float = 2e-2
    lr_kappa: float = 3e-2
    beta_hat: float | None = None
    max_iters: int = 300
    sweeps: int = 200
    inner_replicates: int = 50
    seed: int = 0
    tol: float = 1e-4
    posterior: str = "gibbs"
    f_mean_source: str = "mean"

    def __post_init__(self):
        if not (self.C1 > 0 and self.c > 0):
            raise ValueError("C1 and c must be positive")
        if not self.C1 < self.c:
            raise ValueError("C1 must be smaller than c so the log barrier stays finite")
        if min(self.lr_lambda, self.lr_mu, self.lr_kappa) <= 0:
            raise ValueError("learning rates must be positive")
        if self.beta_hat is not None and not 0 < self.beta_hat < 1:
            raise ValueError("beta_hat must lie in (0, 1)")
        if self.max_iters < 1 or self.sweeps < 1 or self.inner_replicates < 1:
            raise ValueError("max_iters, sweeps and inner_replicates must be at least 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.posterior not in ("gibbs", "exact"):
            raise ValueError("posterior must be 'gibbs' or 'exact'")
        if self.f_mean_source not in ("mean", "binary"):
            raise ValueError("f_mean_source must be 'mean' or 'binary'")


@dataclass(eq=False)
class TrainedModel:
    dual: DualState
    eta_hat: np.ndarray
    f_hat: np.ndarray
    X: np.ndarray
    y: np.ndarray
    kernel: KernelSpec
    gem: GemModel | None
    prior: PriorConfig
    config: TrainConfig
    method: str = "gem-med"
    history: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        """Per-sample expansion coefficients ``eta_hat * lam * y``."""
        return self.eta_hat * self.dual.lam * self.y

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.X.shape[1]:
            raise DataError(f"input has {X.shape[1]} features, model expects {self.X.shape[1]}")
        return kernel_matrix(self.kernel, X, self.X) @ self.weights


def _coverage_targets(cfg: TrainConfig, gem: GemModel | None) -> dict:
    if cfg.beta_hat is not None or gem is None:
        b = cfg.beta_hat if cfg.beta_hat is not None else 0.0
        return {z: b for z in LABELS}
    return {z: gem.coverage_target(z) for z in LABELS}


def dual_gradients(
    expectations: Expectations,
    dual: DualState,
    cfg: TrainConfig,
    gem: GemModel | None,
    T: int | None = None,
    prior: PriorConfig | None = None,
):
    """Gradient of the dual objective from posterior expectations.

    ``d/d lam_n = 1 - E[eta_n y_n f_n] - 1/(c - lam_n)``,
    ``d/d mu_z = E[sum_z eta_n h_n] - gamma_hat_z``,
    ``d/d kappa_z = target_z - E[sum_z eta_n] / |T|``.

    Without a GEM model only the lambda component is nonzero.
    """
    lam = dual.lam
    if np.any(lam >= cfg.c):
        raise TrainingError("lambda reached the slack rate c; the log barrier is undefined")
    g_lam = 1.0 - expectations.margin - 1.0 / (cfg.c - lam)
    if gem is None:
        return g_lam, {z: 0.0 for z in LABELS}, {z: 0.0 for z in LABELS}
    T = gem.n_total if T is None else T
    kfac = 1.0 / T if (prior is None or prior.kappa_scaled) else 1.0
    target = _coverage_targets(cfg, gem)
    g_mu = {z: expectations.entropy[z] - gem.gamma_hat[z] for z in LABELS}
    g_kappa = {z: target[z] - kfac * expectations.coverage[z] for z in LABELS}
    return g_lam, g_mu, g_kappa


def psgd_step(dual: DualState, grads, cfg: TrainConfig) -> DualState:
    """One projected ascent step: lambda clipped to [0, C1], mu and kappa to
    the nonnegative half-line."""
    g_lam, g_mu, g_kappa = grads
    lam = np.clip(dual.lam + cfg.lr_lambda * g_lam, 0.0, cfg.C1)
    mu = {z: max(0.0, dual.mu[z] + cfg.lr_mu * g_mu[z]) for z in LABELS}
    kappa = {z: max(0.0, dual.kappa[z] + cfg.lr_kappa * g_kappa[z]) for z in LABELS}
    return DualState(lam, mu, kappa)


def med_expectations(g, dual: DualState, y) -> Expectations:
    """Expectations with every indicator frozen at 1 (plain MED)."""
    y = np.asarray(y, dtype=float)
    margin = y * (g.values @ (dual.lam * y))
    return Expectations(margin, {z: 0.0 for z in LABELS}, {z: 0.0 for z in LABELS})


def _explicit_terms(dual: DualState, cfg: TrainConfig, gem: GemModel | None) -> float:
    val = float(np.sum(dual.lam + np.log1p(-dual.lam / cfg.c)))
    if gem is not None:
        target = _coverage_targets(cfg, gem)
        val -= sum(dual.mu[z] * gem.gamma_hat[z] for z in LABELS)
        val += sum(dual.kappa[z] * target[z] for z in LABELS)
    return val


def mean_field_objective(g, dual, prior, h, y, T, eta_marg, cfg, gem) -> float:
    """Dual objective with ``log W`` replaced by its mean-field lower bound
    under independent Bernoulli(eta_marg) indicators.

    Exact when every marginal is 0 or 1 (in particular for frozen MED).
    """
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(eta_marg, dtype=float), 0.0, 1.0)
    ly = dual.lam * y
    m = p * ly
    quad = m @ (g.values @ m) + np.sum(ly**2 * np.diag(g.values) * p * (1 - p))
    if gem is None:
        return _explicit_terms(dual, cfg, None) - 0.5 * quad
    kfac = 1.0 / T if prior.kappa_scaled else 1.0
    b = -np.where(y == 1, dual.mu[1], dual.mu[-1]) * h + np.where(y == 1, dual.kappa[1], dual.kappa[-1]) * kfac
    if prior.margin_offset:
        b = b - dual.lam
    p1 = prior.prior_eta1
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(p > 0, p * np.log(p / p1), 0.0) + np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - p1)), 0.0)
    elbo = 0.5 * quad + p @ b - kl.sum()
    return _explicit_terms(dual, cfg, gem) - float(elbo)


def train(
    ds: Dataset,
    spec: KernelSpec,
    gem: GemModel | None,
    prior: PriorConfig,
    cfg: TrainConfig,
    freeze_eta: bool = False,
    log=None,
) -> TrainedModel:
    """Fit the dual variables by projected stochastic gradient ascent.

    Each iteration re-estimates the posterior expectations (a fresh Gibbs
    run drawing from the trainer's stream, or exact enumeration), takes one
    projected step, and stops after ``cfg.max_iters`` iterations or once the
    largest dual update falls below ``cfg.tol``.

    With ``freeze_eta`` the indicators stay at 1 and mu, kappa at 0, which is
    plain MED; ``gem`` may then be None.

    ``log``, if given, is called with each history record.
    """
    ds.require_both_labels()
    if not freeze_eta:
        if gem is None:
            raise TrainingError("GEM-MED training requires a fitted GemModel")
        if gem.labels.size != len(ds) or not np.array_equal(gem.labels, ds.y):
            raise TrainingError("GemModel was fitted on a different dataset")
    if cfg.posterior == "exact" and prior.logit_form != "additive":
        raise TrainingError("exact posterior requires the additive logit form")

    g = gram(spec, ds)
    y = ds.y.astype(float)
    N = len(ds)
    gem_used = None if freeze_eta else gem
    h = gem.entropy_weights if gem_used is not None else np.zeros(N)
    rng = make_rng(int(cfg.seed), "train")
    dual = DualState(np.full(N, cfg.C1 / 2.0), {1: 0.0, -1: 0.0}, {1: 0.0, -1: 0.0})

    history, timings = [], []
    eta_hat = np.ones(N)
    f_hat = g.values @ (dual.lam * y)
    t0 = time.perf_counter()
    for it in range(1, cfg.max_iters + 1):
        if freeze_eta:
            ex = med_expectations(g, dual, y)
            eta_hat = np.ones(N)
            f_hat = ex.margin * y
            objective = mean_field_objective(g, dual, prior, h, y, N, eta_hat, cfg, None)
        elif cfg.posterior == "exact":
            post = exact_posterior(g, dual, prior, h, y, T=N)
            ex = post.expectations
            eta_hat, f_hat = post.eta_marginals, post.f_mean
            objective = post.dual_objective(dual, cfg.c, gem.gamma_hat, _coverage_targets(cfg, gem))
        else:
            est = gibbs_run(
                g, dual, prior, h, y, cfg.sweeps, cfg.inner_replicates, rng, T=N,
                f_mean_source=cfg.f_mean_source,
            )
            ex = est.expectations
            eta_hat, f_hat = est.eta_hat, est.f_hat
            objective = mean_field_objective(g, dual, prior, h, y, N, est.eta_mean, cfg, gem)

        grads = dual_gradients(ex, dual, cfg, gem_used, T=N, prior=prior)
        flat = np.r_[grads[0], [grads[1][z] for z in LABELS], [grads[2][z] for z in LABELS]]
        if not np.all(np.isfinite(flat)):
            raise TrainingError(f"non-finite gradient at iteration {it}")
        new = psgd_step(dual, grads, cfg)
        new.check_feasible(cfg.C1, cfg.c)
        step = float(np.max(np.abs(new.as_vector() - dual.as_vector())))
        dual = new

        rec = {
            "iter": it,
            "objective": float(objective),
            "max_grad": float(np.max(np.abs(flat))),
            "max_update": step,
            "mu": [dual.mu[1], dual.mu[-1]],
            "kappa": [dual.kappa[1], dual.kappa[-1]],
        }
        history.append(rec)
        timings.append(time.perf_counter() - t0)
        if log is not None:
            log(rec, timings[-1])
        if step < cfg.tol:
            break

    return TrainedModel(
        dual=dual,
        eta_hat=np.asarray(eta_hat, dtype=float),
        f_hat=np.asarray(f_hat, dtype=float),
        X=np.array(ds.X),
        y=np.array(ds.y),
        kernel=spec,
        gem=gem,
        prior=prior,
        config=cfg,
        method="med" if freeze_eta else "gem-med",
        history=history,
        timings=timings,
    )


# ---------------------------------------------------------------- serialization


def _pm(d: dict) -> dict:
    return {"+1": d[1], "-1": d[-1]}


def _unpm(d: dict, cast=float) -> dict:
    return {1: cast(d["+1"]), -1: cast(d["-1"])}


def _gem_to_json(gem: GemModel) -> dict:
    return {
        "k": gem.k,
        "labels": gem.labels.tolist(),
        "distances": gem.distances.tolist(),
        "selected": gem.selected.astype(int).tolist(),
        "gamma_hat": _pm(gem.gamma_hat),
        "beta_hat": gem.beta_hat,
        "epsilon": _pm(gem.epsilon),
        "threshold": _pm(gem.threshold),
        "scale": _pm(gem.scale),
        "selected_count": _pm(gem.selected_count),
        "normalization": gem.normalization,
        "references": {"+1": gem.references[1].tolist(), "-1": gem.references[-1].tolist()},
    }


def _gem_from_json(d: dict) -> GemModel:
    return GemModel(
        k=int(d["k"]),
        labels=np.array(d["labels"], dtype=int),
        distances=np.array(d["distances"], dtype=float),
        selected=np.array(d["selected"], dtype=bool),
        gamma_hat=_unpm(d["gamma_hat"]),
        beta_hat=float(d["beta_hat"]),
        epsilon=_unpm(d["epsilon"]),
        threshold=_unpm(d["threshold"]),
        scale=_unpm(d["scale"]),
        selected_count=_unpm(d["selected_count"], int),
        normalization=d["normalization"],
        references={z: np.array(v, dtype=float) for z, v in _unpm(d["references"], list).items()},
    )


def save_model(model: TrainedModel, path) -> None:
    """Write the model as a header line ``gemmed-model v1`` followed by one
    JSON document with fixed field names."""
    body = {
        "method": model.method,
        "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma},
        "prior": asdict(model.prior),
        "config": asdict(model.config),
        "X": model.X.tolist(),
        "y": model.y.tolist(),
        "lambda": model.dual.lam.tolist(),
        "mu": _pm(model.dual.mu),
        "kappa": _pm(model.dual.kappa),
        "eta_hat": model.eta_hat.tolist(),
        "f_hat": model.f_hat.tolist(),
        "gem": None if model.gem is None else _gem_to_json(model.gem),
        "history": model.history,
        "meta": model.meta,
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(MODEL_HEADER + "\n")
        json.dump(body, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    text = Path(path).read_text(encoding="utf-8")
    first, _, rest = text.partition("\n")
    if first.strip() != MODEL_HEADER:
        raise ModelFormatError(f"{path}: bad version line {first.strip()!r}; expected {MODEL_HEADER!r}")
    try:
        d = json.loads(rest)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: malformed model body ({exc})") from None
    try:
        return TrainedModel(
            dual=DualState(d["lambda"], _unpm(d["mu"]), _unpm(d["kappa"])),
            eta_hat=np.array(d["eta_hat"], dtype=float),
            f_hat=np.array(d["f_hat"], dtype=float),
            X=np.array(d["X"], dtype=float),
            y=np.array(d["y"], dtype=int),
            kernel=KernelSpec(**d["kernel"]),
            gem=None if d["gem"] is None else _gem_from_json(d["gem"]),
            prior=PriorConfig(**d["prior"]),
            config=TrainConfig(**d["config"]),
            method=d["method"],
            history=d["history"],
            meta=d.get("meta", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: missing or invalid field ({exc})") from None
