import numpy as np
import pytest

from gemmed.dataset import Dataset
from gemmed.dual import DualState
from gemmed.gem import GemModel
from gemmed.kernel import KernelSpec, gram

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
CRITERIA: dict = {}


def record(cid: int, title: str, passed: bool, detail: str) -> None:
    CRITERIA[cid] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA):
        title, ok, detail = CRITERIA[cid]
        terminalreporter.write_line(f"criterion {cid} {'PASS' if ok else 'FAIL'} {title}: {detail}")


def make_gem(labels, h, gamma_hat=None, counts=None) -> GemModel:
    """GemModel with given per-sample weights, bypassing the k-NN fit."""
    labels = np.asarray(labels, dtype=int)
    h = np.asarray(h, dtype=float)
    if gamma_hat is None:
        gamma_hat = {z: float(h[labels == z].sum()) for z in (1, -1)}
    if counts is None:
        counts = {z: int(np.sum(labels == z)) for z in (1, -1)}
    return GemModel(
        k=1,
        labels=labels,
        distances=h,
        selected=np.ones(labels.size, dtype=bool),
        gamma_hat=dict(gamma_hat),
        beta_hat=0.5,
        epsilon={1: 0.0, -1: 0.0},
        threshold={z: float(h[labels == z].max(initial=0.0)) for z in (1, -1)},
        scale={1: 1.0, -1: 1.0},
        selected_count=dict(counts),
        normalization="none",
        references={},
    )


def random_instance(rng, N, C1=1.0):
    """Random RBF problem with a feasible dual point."""
    X = rng.normal(size=(N, 2))
    y = np.where(rng.random(N) < 0.5, 1, -1)
    y[0], y[-1] = 1, -1
    g = gram(KernelSpec("rbf", float(rng.uniform(0.3, 2.0))), X)
    h = rng.uniform(0.0, 1.5, N)
    dual = DualState(
        rng.uniform(0.05, C1 * 0.95, N),
        {1: rng.uniform(0, 1), -1: rng.uniform(0, 1)},
        {1: rng.uniform(0, 2), -1: rng.uniform(0, 2)},
    )
    gamma_hat = {1: float(rng.uniform(0.2, 2)), -1: float(rng.uniform(0.2, 2))}
    counts = {z: max(1, int(np.sum(y == z)) - 1) for z in (1, -1)}
    return Dataset(X, y), g, h, y, dual, make_gem(y, h, gamma_hat, counts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
