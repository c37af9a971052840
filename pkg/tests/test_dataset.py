import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gemmed.dataset import (
    DataError,
    Dataset,
    Sample,
    SyntheticConfig,
    bipartite_split,
    generate_synthetic,
    load_csv,
    round_half_up,
    save_csv,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    ds = load_csv(write(tmp_path, "x1,x2,y\n0,0,1\n1,1,-1"))
    assert len(ds) == 2 and ds.dim == 2
    np.testing.assert_array_equal(ds.y, [1, -1])


def test_zero_one_labels_are_mapped(tmp_path):
    ds = load_csv(write(tmp_path, "x1,y\n0.5,0\n1.5,1\n"))
    np.testing.assert_array_equal(ds.y, [-1, 1])


def test_non_numeric_row_names_row_one(tmp_path):
    with pytest.raises(DataError, match="row 1"):
        load_csv(write(tmp_path, "x1,x2,y\na,b,1\n"))


def test_unknown_label_and_ragged_row(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        load_csv(write(tmp_path, "x1,y\n0,1\n0,3\n"))
    with pytest.raises(DataError, match="row 1.*fields"):
        load_csv(write(tmp_path, "x1,x2,y\n0,1\n"))


def test_missing_label_column(tmp_path):
    with pytest.raises(DataError, match="label column"):
        load_csv(write(tmp_path, "x1,x2\n0,1\n"))


def test_anomaly_column(tmp_path):
    ds = load_csv(write(tmp_path, "x1,y,anomaly\n0,1,0\n2,-1,1\n"), anomaly_column="anomaly")
    np.testing.assert_array_equal(ds.anomaly, [False, True])


def test_csv_round_trip_is_exact(tmp_path):
    ds = generate_synthetic(SyntheticConfig(n_per_class=7, seed=3))
    p = tmp_path / "rt.csv"
    save_csv(ds, p)
    back = load_csv(p, anomaly_column="anomaly")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.anomaly, ds.anomaly)


def test_dataset_is_immutable():
    ds = Dataset(np.zeros((2, 1)), [1, -1])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_from_samples():
    ds = Dataset.from_samples([Sample(np.array([1.0]), 1, False), Sample(np.array([2.0]), -1, True)])
    assert ds.anomaly.tolist() == [False, True]
    assert [s.label for s in ds.samples()] == [1, -1]


def test_default_synthetic_sizes():
    ds = generate_synthetic(SyntheticConfig())
    assert len(ds) == 200
    assert int(ds.anomaly.sum()) == 40
    r = np.linalg.norm(ds.X[ds.anomaly], axis=1)
    assert r.min() >= 55.0 and r.max() <= 56.0


def test_zero_corruption_is_all_nominal():
    ds = generate_synthetic(SyntheticConfig(corruption_rate=0.0))
    assert not ds.anomaly.any()
    assert np.sum(ds.y == 1) == np.sum(ds.y == -1) == 100


def test_generator_is_deterministic():
    a = generate_synthetic(SyntheticConfig(seed=11))
    b = generate_synthetic(SyntheticConfig(seed=11))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.X, generate_synthetic(SyntheticConfig(seed=12)).X)


def test_nominal_moments():
    ds = generate_synthetic(SyntheticConfig(n_per_class=20000, corruption_rate=0.0, seed=5))
    Xp = ds.X[ds.y == 1]
    np.testing.assert_allclose(Xp.mean(0), [3, 3], atol=0.15)
    np.testing.assert_allclose(np.cov(Xp.T), [[20, 16], [16, 20]], rtol=0.05)


@pytest.mark.parametrize(
    "kw",
    [{"covariance": ((1.0, 2.0), (2.0, 1.0))}, {"corruption_rate": 1.0}, {"n_per_class": 0}, {"ring_width": 0.0}],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(**kw))


def test_round_half_up():
    assert [round_half_up(v) for v in (0.5, 1.5, 2.5, 2.4)] == [1, 2, 3, 2]


def test_split_counts_and_disjointness():
    ds = Dataset(np.arange(20.0).reshape(-1, 1), [1] * 10 + [-1] * 10)
    sp = bipartite_split(ds, 0.5, seed=1)
    for z in (1, -1):
        assert len(sp.part_m[z]) == 5 and len(sp.part_n[z]) == 5
        assert not set(sp.part_m[z]) & set(sp.part_n[z])
        assert set(sp.part_m[z]) | set(sp.part_n[z]) == set(ds.class_indices(z))


def test_split_reference_clamped_to_one():
    ds = Dataset(np.arange(8.0).reshape(-1, 1), [1] * 4 + [-1] * 4)
    sp = bipartite_split(ds, 0.01, seed=0)
    assert all(len(sp.part_m[z]) == 1 for z in (1, -1))


def test_split_is_deterministic_and_checks_class_size():
    ds = Dataset(np.arange(12.0).reshape(-1, 1), [1] * 6 + [-1] * 6)
    a, b = bipartite_split(ds, 0.5, 9), bipartite_split(ds, 0.5, 9)
    assert all(np.array_equal(a.part_m[z], b.part_m[z]) for z in (1, -1))
    with pytest.raises(DataError):
        bipartite_split(Dataset(np.arange(3.0).reshape(-1, 1), [1, 1, -1]), 0.5)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), f=st.floats(0.01, 0.99))
def test_split_partition_property(n, f):
    ds = Dataset(np.arange(2.0 * n).reshape(-1, 1), [1] * n + [-1] * n)
    sp = bipartite_split(ds, f, seed=n)
    for z in (1, -1):
        assert 1 <= len(sp.part_m[z]) <= n - 1
        assert len(sp.part_m[z]) + len(sp.part_n[z]) == n
