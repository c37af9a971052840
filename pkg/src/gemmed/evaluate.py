"""Prediction, anomaly-ranking metrics, baselines, kernel-width selection and
the per-cell benchmark runner."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataset import (
    LABELS,
    DataError,
    Dataset,
    SyntheticConfig,
    bipartite_split,
    generate_synthetic,
)
from .gem import GemModel, fit_gem, knn_distances, loo_detector
from .kernel import KernelSpec
from .posterior import PriorConfig
from .streams import derive_seed, make_rng
from .trainer import TrainConfig, TrainedModel, train

__all__ = [
    "EvalReport",
    "CSV_COLUMNS",
    "METHODS",
    "predict",
    "predict_many",
    "decision_scores",
    "misclassification",
    "precision_recall",
    "auc",
    "baseline_med",
    "baseline_two_stage",
    "cv_gamma",
    "cv_errors",
    "BenchmarkSettings",
    "run_cell",
    "write_rows_csv",
    "summarize",
    "write_summary_json",
]

CSV_COLUMNS = ("method", "seed", "R", "r_a", "error", "auc", "runtime_s", "status")
METHODS = ("gem-med", "med", "gem+med")


def decision_scores(model: TrainedModel, X) -> np.ndarray:
    """``sum_n eta_hat_n lam_n y_n K(x, x_n)`` for each row of ``X``."""
    return model.decision_function(X)


def predict_many(model: TrainedModel, X) -> np.ndarray:
    s = decision_scores(model, X)
    return np.where(s >= 0, 1, -1)


def predict(model: TrainedModel, x) -> int:
    """Sign of the decision score; an exact zero maps to +1."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("predict takes a single feature vector; use predict_many for a matrix")
    return int(predict_many(model, x[None, :])[0])


def misclassification(model: TrainedModel, test: Dataset) -> float:
    if len(test) == 0:
        raise DataError("empty test set")
    return float(np.mean(predict_many(model, test.X) != test.y))


def precision_recall(eta_hat, anomaly_truth, cutoffs) -> list[tuple[float, float, float]]:
    """Precision and recall of the flagged set ``{n: eta_hat_n <= rho}`` for
    each cutoff ``rho``.

    An empty flagged set has precision 1 by convention.
    """
    eta = np.asarray(eta_hat, dtype=float).ravel()
    truth = np.asarray(anomaly_truth, dtype=bool).ravel()
    if eta.size != truth.size:
        raise DataError(f"length mismatch: {eta.size} scores vs {truth.size} truth flags")
    n_true = int(truth.sum())
    if n_true == 0:
        raise DataError("no true anomalies; recall is undefined")
    out = []
    for rho in cutoffs:
        flagged = eta <= rho
        nf = int(flagged.sum())
        hit = int((flagged & truth).sum())
        out.append((float(rho), hit / nf if nf else 1.0, hit / n_true))
    return out


def auc(scores, truth) -> float:
    """ROC area of ``scores`` (higher means more anomalous) against ``truth``.

    Mann-Whitney statistic from mid-ranks, so ties count one half.
    """
    s = np.asarray(scores, dtype=float).ravel()
    t = np.asarray(truth, dtype=bool).ravel()
    if s.size != t.size:
        raise DataError(f"length mismatch: {s.size} scores vs {t.size} truth flags")
    n1 = int(t.sum())
    n0 = t.size - n1
    if n1 == 0 or n0 == 0:
        raise DataError("AUC needs both anomalous and nominal samples")
    r = rankdata(s)
    return float((r[t].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


# ---------------------------------------------------------------- baselines


def baseline_med(ds: Dataset, spec: KernelSpec, prior: PriorConfig, cfg: TrainConfig) -> TrainedModel:
    """Plain MED: the trainer with eta frozen at 1 and mu, kappa at 0."""
    return train(ds, spec, None, prior, cfg, freeze_eta=True)


def baseline_two_stage(
    ds: Dataset,
    spec: KernelSpec,
    gem: GemModel | None,
    prior: PriorConfig,
    cfg: TrainConfig,
    alpha: float,
    k: int | None = None,
) -> TrainedModel:
    """Screen the training set with a per-class leave-one-out k-NN detector at
    false-alarm level ``alpha``, then fit plain MED on what remains.

    ``k`` defaults to ``gem.k`` (or 5 without a GEM model).  The returned
    model carries ``meta["kept"]`` (boolean mask over ``ds``) and
    ``meta["anomaly_score"]`` (leave-one-out distance over the class
    threshold, so values above 1 were removed).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    k = k if k is not None else (gem.k if gem is not None else 5)
    ds.require_both_labels()
    det = loo_detector(ds, k, alpha)
    score = np.zeros(len(ds))
    for z in LABELS:
        idx = ds.class_indices(z)
        d = knn_distances(ds.X[idx], det.references[z], k, exclude=np.arange(idx.size))
        score[idx] = d / det.thresholds[z] if det.thresholds[z] > 0 else np.where(d > 0, np.inf, 0.0)
    kept = score <= 1.0
    if not kept.any():
        raise DataError("the detector flagged every training sample")
    sub = ds.subset(np.flatnonzero(kept))
    model = baseline_med(sub, spec, prior, cfg)
    model.method = "gem+med"
    model.meta = {"kept": kept.tolist(), "anomaly_score": score.tolist(), "alpha": alpha, "k": k}
    return model


def cv_errors(
    ds: Dataset,
    gamma_grid,
    folds: int,
    cfg: TrainConfig,
    prior: PriorConfig | None = None,
    seed: int = 0,
) -> dict:
    """Mean fold misclassification of plain MED for each RBF width.

    Folds are stratified: each class is shuffled and dealt round-robin.
    """
    grid = sorted({float(g) for g in gamma_grid})
    if not grid:
        raise ValueError("gamma grid is empty")
    if folds < 2:
        raise ValueError("folds must be at least 2")
    prior = prior or PriorConfig()
    rng = make_rng(int(seed), "cv_gamma")
    fold_of = np.empty(len(ds), dtype=int)
    for z in LABELS:
        idx = rng.permutation(ds.class_indices(z))
        fold_of[idx] = np.arange(idx.size) % folds
    splits = []
    for f in range(folds):
        tr, te = np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)
        if te.size == 0:
            raise DataError(f"fold {f} is empty")
        train_ds = ds.subset(tr)
        if len(np.unique(train_ds.y)) < 2:
            raise DataError(f"fold {f}: training part holds a single class")
        splits.append((train_ds, ds.subset(te)))
    return {
        g: float(np.mean([misclassification(baseline_med(a, KernelSpec("rbf", g), prior, cfg), b) for a, b in splits]))
        for g in grid
    }


def cv_gamma(
    ds: Dataset,
    gamma_grid,
    folds: int,
    cfg: TrainConfig,
    prior: PriorConfig | None = None,
    seed: int = 0,
) -> float:
    """RBF width with the lowest cross-validated MED error; ties go to the
    smaller width."""
    errs = cv_errors(ds, gamma_grid, folds, cfg, prior, seed)
    best = min(errs.values())
    return min(g for g, e in errs.items() if e == best)


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkSettings:
    """Everything a benchmark cell needs apart from its coordinates."""

    synthetic: SyntheticConfig = SyntheticConfig()
    kernel: KernelSpec = KernelSpec("linear")
    prior: PriorConfig = PriorConfig()
    train: TrainConfig = TrainConfig()
    k: int = 5
    beta_hat: float = 0.8
    normalization: str = "class_mean"
    split_fraction: float = 0.5
    alpha: float = 0.05
    n_test_per_class: int = 2000
    methods: tuple = METHODS
    record_runtime: bool = False


@dataclass
class EvalReport:
    """Benchmark outcome: one row per method x seed x cell plus summaries."""

    rows: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def per_method(self) -> dict:
        return summarize(self.rows)

    @property
    def failed(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)


def _fit_method(method, train_ds, settings, cell_seed, R, r_a, rep):
    cfg = replace(settings.train, seed=derive_seed(cell_seed, "train", method, R, r_a, rep))
    if method == "med":
        m = baseline_med(train_ds, settings.kernel, settings.prior, cfg)
        return m, np.zeros(len(train_ds))  # constant score: no ranking
    if method == "gem+med":
        m = baseline_two_stage(train_ds, settings.kernel, None, settings.prior, cfg, settings.alpha, settings.k)
        return m, np.asarray(m.meta["anomaly_score"])
    split = bipartite_split(
        train_ds, settings.split_fraction, derive_seed(cell_seed, "bipartite_split", R, r_a, rep)
    )
    gem = fit_gem(train_ds, split, settings.k, settings.beta_hat, normalization=settings.normalization)
    m = train(train_ds, settings.kernel, gem, settings.prior, cfg)
    return m, -m.eta_hat


def run_cell(seed: int, R: float, r_a: float, rep: int, settings: BenchmarkSettings, log=None) -> list[dict]:
    """Generate the training and test sets of one grid cell and evaluate
    every method on them.

    Failures become rows with ``status`` set to ``"error: ..."``; the
    remaining methods still run.
    """
    syn = replace(
        settings.synthetic,
        ring_inner_radius=float(R),
        corruption_rate=float(r_a),
        seed=derive_seed(seed, "train_data", R, r_a, rep),
    )
    rows = []
    try:
        train_ds = generate_synthetic(syn)
        test_ds = generate_synthetic(
            replace(syn, corruption_rate=0.0, n_per_class=settings.n_test_per_class,
                    seed=derive_seed(seed, "test_data", R, r_a, rep))
        )
    except Exception as exc:  # noqa: BLE001 - recorded as an error row
        return [_row(m, rep, R, r_a, None, None, None, f"error: {exc}") for m in settings.methods]

    for method in settings.methods:
        t0 = time.perf_counter()
        try:
            model, score = _fit_method(method, train_ds, settings, seed, R, r_a, rep)
            err = misclassification(model, test_ds)
            a = auc(score, train_ds.anomaly) if train_ds.anomaly.any() else None
            rt = time.perf_counter() - t0 if settings.record_runtime else None
            rows.append(_row(method, rep, R, r_a, err, a, rt, "ok"))
        except Exception as exc:  # noqa: BLE001 - recorded as an error row
            rows.append(_row(method, rep, R, r_a, None, None, None, f"error: {type(exc).__name__}: {exc}"))
        if log is not None:
            log(rows[-1])
    return rows


def _row(method, rep, R, r_a, err, a, rt, status) -> dict:
    return {"method": method, "seed": rep, "R": float(R), "r_a": float(r_a),
            "error": err, "auc": a, "runtime_s": rt, "status": status}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows_csv(rows, path) -> None:
    """Write benchmark rows with the columns of ``CSV_COLUMNS``.  Missing
    values are empty fields; floats are written with ``repr``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def _mean_se(vals):
    v = np.asarray([x for x in vals if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def summarize(rows) -> dict:
    """Mean and standard error of error and AUC per (method, R, r_a), keyed
    ``"method|R|r_a"``; error rows are counted but not averaged."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["R"], r["r_a"]), []).append(r)
    out = {}
    for (m, R, ra), rs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]) if kv[0][0] in METHODS else 99, kv[0][1], kv[0][2])):
        ok = [r for r in rs if r["status"] == "ok"]
        e_mean, e_se = _mean_se([r["error"] for r in ok])
        a_mean, a_se = _mean_se([r["auc"] for r in ok])
        out[f"{m}|{R!r}|{ra!r}"] = {
            "method": m, "R": R, "r_a": ra,
            "n": len(ok), "n_failed": len(rs) - len(ok),
            "error_mean": e_mean, "error_se": e_se,
            "auc_mean": a_mean, "auc_se": a_se,
        }
    return out


def write_summary_json(report: EvalReport, path) -> None:
    body = {"seeds": list(report.seeds), "groups": summarize(report.rows)}
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1, sort_keys=True)
        fh.write("\n")
