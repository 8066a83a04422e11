from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from specreg.cli import main
from specreg.estimators import fit_closed_form, fit_iterative, make_bundle
from specreg.filters import FilterSpec, Method
from specreg.simulation import MethodConfig, SimulationConfig, StopConfig
from specreg.solvers import StoppingRule
from specreg.spectral import RegressionProblem, write_csv


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 20))
    beta = np.zeros(20)
    beta[:3] = [2.0, -1.0, 1.0]
    e = 0.5 * rng.standard_normal(30)
    Y = X @ beta + e
    write_csv(tmp_path / "X.csv", X)
    write_csv(tmp_path / "Y.csv", Y)
    write_csv(tmp_path / "beta.csv", beta)
    return tmp_path, X, Y, beta, e


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_kind(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])["error"]


def test_fit_closed_form_matches_library(data, capsys):
    d, X, Y, _, _ = data
    code, out, _ = run(["fit", d / "X.csv", d / "Y.csv", "--method", "ridge", "--alpha", "0.1", "--bn", "0.2"], capsys)
    assert code == 0
    prob = RegressionProblem(X, Y)
    expected = make_bundle(prob, fit_closed_form(prob, FilterSpec(Method.RIDGE, alpha=0.1)), 0.2).to_dict()
    got = json.loads(out)
    np.testing.assert_allclose(got["beta_tilde"], expected["beta_tilde"], atol=1e-12)
    assert got["n_hat"] == expected["n_hat"]


def test_fit_discrepancy_matches_library(data, capsys):
    d, X, Y, _, e = data
    nn = float(np.linalg.norm(e))
    argv = ["fit", d / "X.csv", d / "Y.csv", "--method", "landweber", "--dt", "0.002",
            "--stop", "discrepancy", "--varsigma", "1", "--noise-norm", repr(nn), "--out", d / "b.json"]
    code, out, _ = run(argv, capsys)
    assert code == 0 and out == ""
    got = json.loads((d / "b.json").read_text())
    fit = fit_iterative(RegressionProblem(X, Y), Method.LANDWEBER, 0.002, StoppingRule.discrepancy(nn, 1.0))
    assert got["k0"] == fit.k0
    np.testing.assert_array_equal(got["beta_hat"], fit.beta_hat)


def test_fit_aosr_and_fixed(data, capsys):
    d = data[0]
    code, out, _ = run(["fit", d / "X.csv", d / "Y.csv", "--method", "hbf", "--dt", "0.02",
                        "--stop", "aosr", "--truth", d / "beta.csv"], capsys)
    assert code == 0 and json.loads(out)["k0"] >= 1
    code, out, _ = run(["fit", d / "X.csv", d / "Y.csv", "--method", "showalter", "--dt", "0.002",
                        "--stop", "fixed", "--k", "7"], capsys)
    assert code == 0 and json.loads(out)["k0"] == 7


@pytest.mark.parametrize(
    "extra",
    [
        ["--stop", "discrepancy", "--dt", "0.01"],
        ["--stop", "aosr", "--dt", "0.01"],
        ["--stop", "fixed", "--dt", "0.01"],
        ["--stop", "fixed", "--k", "3"],
        ["--alpha", "-1"],
        ["--bogus"],
    ],
)
def test_fit_bad_arguments(data, capsys, extra):
    d = data[0]
    code, _, err = run(["fit", d / "X.csv", d / "Y.csv", "--method", "landweber", *extra], capsys)
    assert code == 2
    assert error_kind(err) == "bad-arguments"


def test_missing_input_exit_3(data, capsys):
    d = data[0]
    code, _, err = run(["fit", d / "X.csv", d / "missing.csv", "--method", "ridge"], capsys)
    assert code == 3 and error_kind(err) == "input"


def test_malformed_input_exit_3(data, capsys):
    d = data[0]
    (d / "bad.csv").write_text("1,2\nfoo,3\n")
    code, _, err = run(["fit", d / "bad.csv", d / "Y.csv", "--method", "ridge"], capsys)
    assert code == 3 and error_kind(err) == "input"


def test_divergence_exit_4(data, capsys):
    d = data[0]
    code, _, err = run(["fit", d / "X.csv", d / "Y.csv", "--method", "landweber", "--dt", "5",
                        "--stop", "fixed", "--k", "500"], capsys)
    assert code == 4 and error_kind(err) == "numerical"


def test_bootstrap_deterministic_with_threads(data, capsys):
    d = data[0]
    base = ["bootstrap", d / "X.csv", d / "Y.csv", "--method", "ridge", "--alpha", "0.05",
            "--bn", "0.3", "--B", "150", "--seed", "9"]
    code1, out1, _ = run(base, capsys)
    code2, out2, _ = run([*base, "--threads", "3"], capsys)
    assert code1 == code2 == 0
    assert out1 == out2
    rep = json.loads(out1)
    assert rep["B"] == 150 and len(rep["e_tilde_samples"]) == 150


def test_bootstrap_requires_seed(data, capsys):
    d = data[0]
    code, _, err = run(["bootstrap", d / "X.csv", d / "Y.csv", "--method", "ridge"], capsys)
    assert code == 2 and error_kind(err) == "bad-arguments"


def test_bad_thread_count(data, capsys):
    d = data[0]
    code, _, _ = run(["bootstrap", d / "X.csv", d / "Y.csv", "--method", "ridge", "--seed", "1",
                      "--threads", "0"], capsys)
    assert code == 2


def test_simulate_byte_identical(tmp_path, capsys):
    cfg = SimulationConfig(n=40, p=30, methods=[MethodConfig("landweber"), MethodConfig("nesterov")],
                           baselines=["ls", "ridge"], stop=StopConfig("discrepancy", 1.0, 1, 2000))
    (tmp_path / "case.json").write_text(json.dumps(cfg.to_dict()))
    outs = []
    for threads in ("1", "2"):
        code, _, _ = run(["simulate", "--config", tmp_path / "case.json", "--seed", "7", "--replicates", "2",
                          "--threads", threads, "--out", tmp_path / f"r{threads}.json",
                          "--table", tmp_path / f"t{threads}.csv"], capsys)
        assert code == 0
        outs.append((tmp_path / f"r{threads}.json").read_bytes())
    assert outs[0] == outs[1]
    assert (tmp_path / "t1.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()
    assert [r["seed"] for r in json.loads(outs[0])] == [7, 8]


def test_simulate_bad_config(tmp_path, capsys):
    (tmp_path / "c.json").write_text('{"n": 10, "p": 5}')
    code, _, err = run(["simulate", "--config", tmp_path / "c.json", "--seed", "1"], capsys)
    assert code == 3 and error_kind(err) == "input"


def test_sweep(tmp_path, capsys):
    write_csv(tmp_path / "est.csv", np.array([2.0, 0.1]))
    write_csv(tmp_path / "truth.csv", np.array([2.0, 0.0]))
    code, out, _ = run(["sweep", tmp_path / "est.csv", tmp_path / "truth.csv", "--step", "0.05",
                        "--curve", tmp_path / "curve.csv"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["best_b"] == pytest.approx(0.1) and res["best_error"] == 0.0
    curve = np.loadtxt(tmp_path / "curve.csv", delimiter=",")
    assert curve.shape[1] == 2 and curve[0, 1] == pytest.approx(0.1)


def test_verify_filters(capsys):
    code, out, _ = run(["verify-filters"], capsys)
    assert code == 0
    reports = json.loads(out)
    assert len(reports) == 9 and all(r["passed"] for r in reports)


def test_verify_filters_failure(capsys):
    code, out, err = run(["verify-filters", "--method", "ridge", "--c0", "0.1"], capsys)
    assert code == 1
    assert error_kind(err) == "conditions-failed"
    assert json.loads(out)[0]["passed_d13"] is False


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "specreg", "verify-filters", "--method", "showalter"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)[0]["method"] == "showalter"
