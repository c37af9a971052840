"""Command-line interface: ``gemmed <command> [options]``.

Every command accepts ``--seed``, ``--config``, ``--out`` and ``--threads``.
A config file holds flat ``key = value`` lines whose keys are the long option
names (dashes or underscores); options given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import (
    LABELS,
    DataError,
    Dataset,
    SyntheticConfig,
    bipartite_split,
    generate_synthetic,
    load_csv,
    save_csv,
)
from .evaluate import (
    METHODS,
    BenchmarkSettings,
    EvalReport,
    baseline_two_stage,
    cv_gamma,
    decision_scores,
    run_cell,
    write_rows_csv,
    write_summary_json,
)
from .gem import NORMALIZATIONS, fit_gem, knn_distances, loo_detector
from .kernel import KernelSpec
from .posterior import PriorConfig
from .streams import derive_seed
from .trainer import TrainConfig, load_model, save_model, train

__all__ = ["main", "build_parser", "read_config"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- option groups


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p):
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=0, help="64-bit master seed")
    g.add_argument("--config", type=Path, help="flat key=value settings file")
    g.add_argument("--out", type=Path, help="output path")
    g.add_argument("--threads", type=int, default=1, help="worker processes (benchmark)")


def _synthetic_opts(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n-per-class", type=int, default=100)
    g.add_argument("--corruption-rate", type=float, default=0.2)
    g.add_argument("--ring-radius", type=float, default=55.0)
    g.add_argument("--ring-width", type=float, default=1.0)


def _model_opts(p):
    g = p.add_argument_group("kernel")
    g.add_argument("--kernel", choices=("linear", "rbf"), default="linear")
    g.add_argument("--gamma", type=float, default=1.0, help="rbf width")
    g = p.add_argument_group("entropy estimate")
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--beta-hat", type=float, default=0.8, help="fraction kept in each class's ME set")
    g.add_argument("--normalization", choices=NORMALIZATIONS, default="class_mean")
    g.add_argument("--split-fraction", type=float, default=0.5)
    g = p.add_argument_group("indicator prior")
    g.add_argument("--a-eta", type=float, default=4.0)
    g.add_argument("--logit-form", choices=("additive", "product"), default="additive")
    g.add_argument("--margin-offset", type=_bool, default=False)
    g = p.add_argument_group("optimizer")
    g.add_argument("--C1", type=float, default=1.0)
    g.add_argument("--c", type=float, default=10.0)
    g.add_argument("--lr-lambda", type=float, default=2e-3)
    g.add_argument("--lr-mu", type=float, default=2e-2)
    g.add_argument("--lr-kappa", type=float, default=3e-2)
    g.add_argument("--coverage-target", type=float, default=None,
                   help="fixed per-class coverage target (default: from the ME sets)")
    g.add_argument("--max-iters", type=int, default=300)
    g.add_argument("--sweeps", type=int, default=200)
    g.add_argument("--inner-replicates", type=int, default=50)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--posterior", choices=("gibbs", "exact"), default="gibbs")
    g.add_argument("--f-mean-source", choices=("mean", "binary"), default="mean")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gemmed", description="Robust kernel classification with anomaly-aware MED.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a ring-corrupted synthetic dataset")
    _common(p)
    _synthetic_opts(p)

    p = sub.add_parser("train", help="fit a model from a CSV file")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--baseline", choices=("none", "med", "gem+med"), default="none")
    p.add_argument("--alpha", type=float, default=0.05, help="false-alarm level for --baseline gem+med")
    p.add_argument("--log", type=Path, help="per-iteration log file (default stderr)")
    _model_opts(p)

    p = sub.add_parser("predict", help="classify the rows of a CSV file")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("detect", help="flag anomalous rows of a CSV file")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="rebuild leave-one-out thresholds at this false-alarm level")

    p = sub.add_parser("benchmark", help="run the synthetic grid and write metric rows")
    _common(p)
    _synthetic_opts(p)
    _model_opts(p)
    p.add_argument("--R", type=_floats, default=[15.0, 35.0, 55.0, 75.0], help="ring radii")
    p.add_argument("--r-a", type=_floats, default=[0.2, 0.3, 0.4, 0.5], help="corruption rates")
    p.add_argument("--seeds", type=int, default=10, help="repetitions per cell")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-test-per-class", type=int, default=2000)
    p.add_argument("--record-runtime", type=_bool, default=False,
                   help="fill runtime_s (makes the CSV machine-dependent)")
    p.add_argument("--summary", type=Path, help="JSON summary path (default: --out with .json)")

    p = sub.add_parser("cv-gamma", help="pick the rbf width by cross-validated MED error")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--grid", type=_floats, default=[1e-3, 1e-2, 1e-1, 1.0, 10.0])
    p.add_argument("--folds", type=int, default=5)
    _model_opts(p)
    return ap


# ---------------------------------------------------------------- config files


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _subparser(ap, command):
    for a in ap._subparsers._group_actions:
        return a.choices[command]
    raise KeyError(command)


def _apply_config(ap, argv) -> argparse.Namespace:
    ns = ap.parse_args(argv)
    if ns.config is None:
        return ns
    sp = _subparser(ap, ns.command)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for k, v in read_config(ns.config).items():
        if k not in actions:
            raise ConfigError(f"{ns.config}: unknown key {k!r} for command {ns.command!r}")
        a = actions[k]
        try:
            val = a.type(v) if a.type is not None else v
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"{ns.config}: bad value for {k!r}: {exc}") from None
        if a.choices is not None and val not in a.choices:
            raise ConfigError(f"{ns.config}: {k!r} must be one of {sorted(a.choices)}")
        defaults[k] = val
    sp.set_defaults(**defaults)
    return ap.parse_args(argv)


# ---------------------------------------------------------------- builders


def _synthetic(ns) -> SyntheticConfig:
    cfg = SyntheticConfig(
        n_per_class=ns.n_per_class,
        corruption_rate=ns.corruption_rate,
        ring_inner_radius=ns.ring_radius,
        ring_width=ns.ring_width,
        seed=ns.seed,
    )
    cfg.validate()
    return cfg


def _kernel(ns) -> KernelSpec:
    return KernelSpec(ns.kernel, ns.gamma)


def _prior(ns) -> PriorConfig:
    return PriorConfig(a_eta=ns.a_eta, logit_form=ns.logit_form, margin_offset=ns.margin_offset)


def _train_cfg(ns) -> TrainConfig:
    return TrainConfig(
        C1=ns.C1, c=ns.c, lr_lambda=ns.lr_lambda, lr_mu=ns.lr_mu, lr_kappa=ns.lr_kappa,
        beta_hat=ns.coverage_target, max_iters=ns.max_iters, sweeps=ns.sweeps,
        inner_replicates=ns.inner_replicates, seed=ns.seed, tol=ns.tol,
        posterior=ns.posterior, f_mean_source=ns.f_mean_source,
    )


def _check_gem_opts(ns):
    if ns.k < 1:
        raise ValueError("k must be at least 1")
    if not 0 < ns.beta_hat < 1:
        raise ValueError("beta_hat must lie in (0, 1)")
    if not 0 < ns.split_fraction < 1:
        raise ValueError("split_fraction must lie in (0, 1)")


def _need_out(ns):
    if ns.out is None:
        raise ValueError("--out is required")
    return ns.out


def _read_table(path):
    """Features plus labels and anomaly flags when the file has them."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if not header:
        raise DataError(f"{path}: empty file, header row required")
    if "y" in header:
        return load_csv(path, "y", "anomaly" if "anomaly" in header else None)
    feat = [i for i, h in enumerate(header) if h != "anomaly"]
    try:
        X = np.loadtxt(path, delimiter=",", skiprows=1, usecols=feat, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return X


# ---------------------------------------------------------------- commands


def cmd_generate(ns) -> int:
    out = _need_out(ns)
    ds = generate_synthetic(_synthetic(ns))
    save_csv(ds, out)
    n_pos, n_neg = int(np.sum(ds.y == 1)), int(np.sum(ds.y == -1))
    print(f"wrote {out}: {len(ds)} rows, {n_pos} with label +1, {n_neg} with label -1, {int(ds.anomaly.sum())} anomalies")
    return 0


def cmd_train(ns) -> int:
    out = _need_out(ns)
    _check_gem_opts(ns)
    ds = load_csv(ns.data, "y", "anomaly" if "anomaly" in _header(ns.data) else None)
    ds.require_both_labels()
    spec, prior, cfg = _kernel(ns), _prior(ns), _train_cfg(ns)

    fh = ns.log.open("w", encoding="utf-8") if ns.log else sys.stderr

    def log(rec, wall):
        fh.write(f"{rec['iter']} {rec['objective']!r} {rec['max_grad']!r} {wall:.3f}\n")

    try:
        if ns.baseline == "med":
            model = train(ds, spec, None, prior, cfg, freeze_eta=True, log=log)
        elif ns.baseline == "gem+med":
            model = baseline_two_stage(ds, spec, None, prior, cfg, ns.alpha, ns.k)
            for rec, wall in zip(model.history, model.timings):
                log(rec, wall)
        else:
            split = bipartite_split(ds, ns.split_fraction, derive_seed(ns.seed, "bipartite_split"))
            gem = fit_gem(ds, split, ns.k, ns.beta_hat, normalization=ns.normalization)
            model = train(ds, spec, gem, prior, cfg, log=log)
    finally:
        if ns.log:
            fh.close()
    save_model(model, out)
    print(f"wrote {out}: method {model.method}, {len(model.history)} iterations")
    return 0


def _header(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _features(data):
    return data.X if isinstance(data, Dataset) else data


def cmd_predict(ns) -> int:
    model = load_model(ns.model)
    X = _features(_read_table(ns.data))
    s = decision_scores(model, X)
    fh = ns.out.open("w", newline="", encoding="utf-8") if ns.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "decision"])
        for i, v in enumerate(s):
            w.writerow([i, repr(float(v)), 1 if v >= 0 else -1])
    finally:
        if ns.out:
            fh.close()
    return 0


def cmd_detect(ns) -> int:
    model = load_model(ns.model)
    data = _read_table(ns.data)
    X = _features(data)
    if X.shape[1] != model.X.shape[1]:
        raise DataError(f"input has {X.shape[1]} features, model expects {model.X.shape[1]}")
    if ns.alpha is not None:
        k = model.gem.k if model.gem is not None else int(model.meta.get("k", 5))
        det = loo_detector(Dataset(model.X, model.y), k, ns.alpha)
    elif model.gem is not None:
        det = model.gem.detector()
    else:
        raise ValueError("model has no entropy estimate; pass --alpha to build a detector")
    labels = data.y if isinstance(data, Dataset) else None

    d = {z: knn_distances(X, det.references[z], det.k) for z in LABELS}
    fh = ns.out.open("w", newline="", encoding="utf-8") if ns.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "decision", "threshold"])
        for i in range(X.shape[0]):
            if labels is not None:
                z = int(labels[i])
            else:
                # unlabeled: score against the class that finds the point most typical
                z = min(LABELS, key=lambda c: d[c][i] / det.thresholds[c] if det.thresholds[c] > 0 else np.inf)
            flag = int(d[z][i] > det.thresholds[z])
            w.writerow([i, repr(float(d[z][i])), flag, repr(float(det.thresholds[z]))])
    finally:
        if ns.out:
            fh.close()
    return 0


def _cell(args):
    seed, R, ra, rep, settings = args
    return run_cell(seed, R, ra, rep, settings)


def cmd_benchmark(ns) -> int:
    out = _need_out(ns)
    _check_gem_opts(ns)
    methods = tuple(m.strip() for m in ns.methods.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected some of {METHODS}")
    if ns.seeds < 1:
        raise ValueError("--seeds must be at least 1")
    syn = _synthetic(ns)
    for R in ns.R:
        for ra in ns.r_a:
            replace(syn, ring_inner_radius=R, corruption_rate=ra).validate()
    settings = BenchmarkSettings(
        synthetic=syn, kernel=_kernel(ns), prior=_prior(ns), train=_train_cfg(ns),
        k=ns.k, beta_hat=ns.beta_hat, normalization=ns.normalization,
        split_fraction=ns.split_fraction, alpha=ns.alpha, n_test_per_class=ns.n_test_per_class,
        methods=methods, record_runtime=ns.record_runtime,
    )
    cells = [(ns.seed, R, ra, rep, settings) for R in ns.R for ra in ns.r_a for rep in range(ns.seeds)]
    if ns.threads > 1:
        with ProcessPoolExecutor(max_workers=ns.threads) as ex:
            results = list(ex.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]

    rows = [r for cell_rows in results for r in cell_rows]
    for r in rows:
        if r["status"] != "ok":
            print(f"cell R={r['R']} r_a={r['r_a']} seed={r['seed']} {r['method']}: {r['status']}", file=sys.stderr)
    report = EvalReport(rows=rows, seeds=list(range(ns.seeds)))
    write_rows_csv(rows, out)
    write_summary_json(report, ns.summary or out.with_suffix(".json"))
    print(f"wrote {out}: {len(rows)} rows, {sum(r['status'] != 'ok' for r in rows)} failed")
    return 1 if report.failed else 0


def cmd_cv_gamma(ns) -> int:
    ds = load_csv(ns.data, "y", "anomaly" if "anomaly" in _header(ns.data) else None)
    g = cv_gamma(ds, ns.grid, ns.folds, _train_cfg(ns), _prior(ns), seed=ns.seed)
    print(repr(g))
    if ns.out:
        ns.out.write_text(repr(g) + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "detect": cmd_detect,
    "benchmark": cmd_benchmark,
    "cv-gamma": cmd_cv_gamma,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = _apply_config(ap, argv)
    except (ConfigError, OSError) as exc:
        print(f"gemmed: error: {exc}", file=sys.stderr)
        return 2
    if ns.threads < 1:
        print("gemmed: error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[ns.command](ns)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"gemmed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
