import csv
import json

import numpy as np
import pytest

from gemmed.cli import main, read_config
from gemmed.dataset import load_csv
from gemmed.trainer import load_model

FAST = ["--max-iters", "20", "--sweeps", "5", "--inner-replicates", "4"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_default(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["generate", "--out", str(out)]) == 0
    r = rows(out)
    assert len(r) == 200
    assert sum(x["anomaly"] == "1" for x in r) == 40
    assert list(r[0]) == ["x1", "x2", "y", "anomaly"]
    assert "40 anomalies" in capsys.readouterr().out


def test_generate_tiny_and_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--n-per-class", "1", "--out", str(a)]) == 0
    assert len(rows(a)) == 2
    main(["generate", "--seed", "5", "--out", str(a)])
    main(["generate", "--seed", "5", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_generate_unwritable(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path / "missing" / "d.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sizes\nn-per-class = 3\ncorruption_rate = 0.0\n")
    out = tmp_path / "d.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(rows(out)) == 6
    assert main(["generate", "--config", str(cfg), "--n-per-class", "4", "--out", str(out)]) == 0
    assert len(rows(out)) == 8
    assert read_config(cfg) == {"n_per_class": "3", "corruption_rate": "0.0"}


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n_per_klass = 3\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.csv")]) == 2
    assert "unknown key 'n_per_klass'" in capsys.readouterr().err
    assert not (tmp_path / "d.csv").exists()


@pytest.fixture
def data(tmp_path):
    p = tmp_path / "train.csv"
    main(["generate", "--n-per-class", "20", "--out", str(p)])
    return p


def test_train_predict_detect(tmp_path, data):
    model, log = tmp_path / "m.model", tmp_path / "train.log"
    assert main(["train", "--data", str(data), "--out", str(model), "--log", str(log), *FAST]) == 0
    assert model.read_text().startswith("gemmed-model v1\n")
    lines = log.read_text().splitlines()
    assert 1 <= len(lines) <= 20
    assert len(lines[0].split()) == 4

    pred = tmp_path / "p.csv"
    assert main(["predict", "--model", str(model), "--data", str(data), "--out", str(pred)]) == 0
    r = rows(pred)
    assert len(r) == 40 and list(r[0]) == ["index", "score", "decision"]

    det = tmp_path / "flags.csv"
    assert main(["detect", "--model", str(model), "--data", str(data), "--alpha", "0", "--out", str(det)]) == 0
    r = rows(det)
    assert list(r[0]) == ["index", "score", "decision", "threshold"]
    assert all(x["decision"] == "0" for x in r)


def test_predict_separable_toy(tmp_path):
    toy = tmp_path / "toy.csv"
    toy.write_text("x1,x2,y\n2,2,1\n3,2.5,1\n2.5,3,1\n-2,-2,-1\n-3,-2.5,-1\n-2.5,-3,-1\n")
    model = tmp_path / "m.model"
    assert main(["train", "--data", str(toy), "--out", str(model), "--k", "1", "--posterior", "exact",
                 "--max-iters", "50"]) == 0
    pred = tmp_path / "p.csv"
    main(["predict", "--model", str(model), "--data", str(toy), "--out", str(pred)])
    assert [int(x["decision"]) for x in rows(pred)] == load_csv(toy).y.tolist()


def test_train_med_baseline(tmp_path, data):
    model = tmp_path / "m.model"
    assert main(["train", "--data", str(data), "--out", str(model), "--baseline", "med", "--max-iters", "10"]) == 0
    m = load_model(model)
    np.testing.assert_array_equal(m.eta_hat, 1.0)
    assert m.method == "med"


def test_train_two_stage(tmp_path, data):
    model = tmp_path / "m.model"
    assert main(["train", "--data", str(data), "--out", str(model), "--baseline", "gem+med", "--max-iters", "5"]) == 0
    assert load_model(model).method == "gem+med"


def test_train_errors_exit_nonzero(tmp_path, capsys):
    one = tmp_path / "one.csv"
    one.write_text("x1,y\n0,1\n1,1\n")
    assert main(["train", "--data", str(one), "--out", str(tmp_path / "m")]) == 1
    assert "label -1" in capsys.readouterr().err


def test_bad_model_header(tmp_path, data, capsys):
    bad = tmp_path / "bad.model"
    bad.write_text("not-a-model\n{}\n")
    assert main(["predict", "--model", str(bad), "--data", str(data)]) == 1
    assert "version line" in capsys.readouterr().err


def test_predict_dimension_mismatch(tmp_path, data, capsys):
    model = tmp_path / "m.model"
    main(["train", "--data", str(data), "--out", str(model), "--baseline", "med", "--max-iters", "2"])
    wide = tmp_path / "wide.csv"
    wide.write_text("x1,x2,x3\n1,2,3\n")
    assert main(["predict", "--model", str(model), "--data", str(wide)]) == 1
    assert "features" in capsys.readouterr().err


def test_benchmark_one_cell(tmp_path):
    out = tmp_path / "bench.csv"
    args = ["benchmark", "--R", "55", "--r-a", "0.2", "--seeds", "1", "--n-test-per-class", "50",
            "--n-per-class", "20", "--out", str(out), *FAST]
    assert main(args) == 0
    r = rows(out)
    assert [x["method"] for x in r] == ["gem-med", "med", "gem+med"]
    assert list(r[0]) == ["method", "seed", "R", "r_a", "error", "auc", "runtime_s", "status"]
    assert all(x["status"] == "ok" and x["runtime_s"] == "" for x in r)
    summary = json.loads(out.with_suffix(".json").read_text())
    g = summary["groups"]["med|55.0|0.2"]
    assert g["error_mean"] == pytest.approx(float(r[1]["error"]))


def test_benchmark_row_count_and_summary(tmp_path):
    out = tmp_path / "bench.csv"
    args = ["benchmark", "--R", "15,55", "--r-a", "0.2,0.4", "--seeds", "2", "--methods", "med,gem+med",
            "--n-test-per-class", "20", "--n-per-class", "15", "--max-iters", "5", "--out", str(out)]
    assert main(args) == 0
    r = rows(out)
    assert len(r) == 2 * 2 * 2 * 2
    summary = json.loads(out.with_suffix(".json").read_text())["groups"]
    for key, g in summary.items():
        errs = [float(x["error"]) for x in r if f'{x["method"]}|{float(x["R"])!r}|{float(x["r_a"])!r}' == key]
        assert g["error_mean"] == pytest.approx(np.mean(errs), abs=1e-15)


def test_benchmark_failing_cell_is_an_error_row(tmp_path):
    out = tmp_path / "bench.csv"
    # k larger than the class reference part makes every gem-med fit fail
    args = ["benchmark", "--R", "55", "--r-a", "0.2", "--seeds", "1", "--methods", "gem-med,med", "--k", "50",
            "--n-test-per-class", "20", "--n-per-class", "15", "--max-iters", "5", "--out", str(out)]
    assert main(args) == 1
    r = rows(out)
    assert r[0]["status"].startswith("error") and r[0]["error"] == ""
    assert r[1]["status"] == "ok"


def test_default_benchmark_grid_size():
    from gemmed.cli import build_parser

    ns = build_parser().parse_args(["benchmark", "--out", "x.csv"])
    assert len(ns.R) * len(ns.r_a) * ns.seeds * len(ns.methods.split(",")) == 480


def test_cv_gamma_command(tmp_path, capsys):
    p = tmp_path / "c.csv"
    r = np.random.default_rng(0)
    with open(p, "w") as fh:
        fh.write("x1,x2,y\n")
        for i in range(30):
            c = 1 if i % 2 else -1
            x = r.normal(2.0 * c, 0.3, 2)
            fh.write(f"{float(x[0])!r},{float(x[1])!r},{c}\n")
    assert main(["cv-gamma", "--data", str(p), "--grid", "0.001,1,1000", "--max-iters", "30"]) == 0
    assert float(capsys.readouterr().out.strip()) in (0.001, 1.0, 1000.0)
