from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specreg.estimators import ridge_penalized
from specreg.filters import Method
from specreg.simulation import (
    DEFAULT_STEP,
    MethodConfig,
    SimulatedData,
    SimulationConfig,
    StopConfig,
    _run_baseline,
    full_case_one_config,
    gen_design,
    gen_errors,
    gen_sparse_beta,
    gen_uniform_beta,
    oracle_ridge,
    ridge_spec,
    run_case,
    run_replicates,
    simulate_data,
    support_recovered,
    threshold_grid,
    threshold_sweep,
)
from specreg.spectral import InputError, RegressionProblem, condition_number, thin_svd


def test_design_covariance_unreshaped():
    X = gen_design(4000, 50, seed=0)
    cov = X.T @ X / 4000
    assert abs(np.mean(np.diag(cov)) - 2.0) <= 2 * math.sqrt(2 / 50) * 2.0
    off = cov[~np.eye(50, dtype=bool)]
    assert abs(off.mean() - 0.5) <= 0.1


def test_design_small_sample_diagonal():
    X = gen_design(50, 50, seed=1)
    assert abs(np.mean(np.sum(X**2, axis=0) / 50) - 2.0) <= 2 * math.sqrt(2 / 50) * 2.0


@pytest.mark.parametrize("reshape", ["minimal", "loglinear"])
@pytest.mark.parametrize("n, p", [(60, 40), (40, 60), (50, 50)])
def test_design_condition_target(reshape, n, p):
    X = gen_design(n, p, cond_target=1e4, seed=2, reshape=reshape)
    assert condition_number(thin_svd(X)) >= 1e4


def test_minimal_reshape_keeps_spectrum_top():
    X0 = gen_design(60, 40, seed=3)
    X = gen_design(60, 40, cond_target=1e4, seed=3)
    s0 = np.linalg.svd(X0, compute_uv=False)
    s = np.linalg.svd(X, compute_uv=False)
    np.testing.assert_allclose(s[:-1], s0[:-1], rtol=1e-10)
    assert s[-1] == pytest.approx(s[0] / 1e4, rel=1e-6)


def test_minimal_reshape_leaves_ill_conditioned_alone():
    X0 = gen_design(50, 50, seed=4)
    target = condition_number(thin_svd(X0)) / 2
    np.testing.assert_array_equal(gen_design(50, 50, cond_target=target, seed=4), X0)


def test_design_deterministic_and_validated():
    np.testing.assert_array_equal(gen_design(10, 5, seed=7), gen_design(10, 5, seed=7))
    with pytest.raises(InputError, match="positive definite"):
        gen_design(10, 5, cov_diag=0.5, cov_offdiag=0.5)
    with pytest.raises(InputError):
        gen_design(10, 5, cond_target=1.0)
    with pytest.raises(InputError):
        gen_design(10, 5, cond_target=10, reshape="cubic")


@pytest.mark.parametrize("p", [20, 21, 300])
def test_sparse_beta_histogram(p):
    beta = gen_sparse_beta(p, seed=p)
    values, counts = np.unique(beta, return_counts=True)
    hist = dict(zip(values.tolist(), counts.tolist()))
    expected = {2.0: 5, -2.0: 5, 1.0: 5, -1.0: 5}
    if p > 20:
        expected[0.0] = p - 20
    assert hist == expected
    assert np.linalg.norm(beta) == pytest.approx(math.sqrt(50))


def test_sparse_beta_needs_twenty():
    with pytest.raises(InputError):
        gen_sparse_beta(19)


def test_uniform_beta_range():
    beta = gen_uniform_beta(1000, seed=0)
    assert beta.min() >= -2 and beta.max() < 2


@pytest.mark.parametrize("dist", ["normal", "laplace"])
def test_error_variance(dist):
    e = gen_errors(100_000, dist, seed=0)
    assert 3.8 <= e.var() <= 4.2
    np.testing.assert_array_equal(e[:10], gen_errors(100_000, dist, seed=0)[:10])


def test_laplace_tails():
    e = gen_errors(200_000, "laplace", seed=1)
    # P(|e| > t) = exp(-t / sqrt 2) for Laplace(0, sqrt 2).
    assert np.mean(np.abs(e) > 3.0) == pytest.approx(math.exp(-3 / math.sqrt(2)), abs=3e-3)


def test_error_dist_unknown():
    with pytest.raises(InputError):
        gen_errors(5, "cauchy")


def test_sweep_three_point_example():
    sw = threshold_sweep(np.array([2.0, 0.1]), np.array([2.0, 0.0]), grid=[0.0, 0.05, 0.5])
    assert sw.best_b == 0.5
    assert sw.best_error == 0.0
    np.testing.assert_allclose(sw.curve, [0.1, 0.1, 0.0])


def test_sweep_exact_estimate_ties_to_smallest():
    truth = np.array([0.0, 1.0, -2.0])
    sw = threshold_sweep(truth.copy(), truth)
    assert sw.best_b == 0.0 and sw.best_error == 0.0
    assert sw.plateau[0] == 0.0 and sw.plateau[1] < 1.0
    assert len(sw.curve) == len(sw.grid)


def test_sweep_grid_default_resolution():
    grid = threshold_grid(np.array([0.0012, -0.001]))
    np.testing.assert_allclose(grid, [0, 5e-4, 1e-3, 1.5e-3])


def test_sweep_plateau_percentile():
    sw = threshold_sweep(np.array([2.0, 0.1]), np.array([2.0, 0.0]), grid=np.linspace(0, 3, 31))
    assert sw.plateau == pytest.approx((0.1, 1.9))
    assert sw.percentile_b(0) == 0.1
    assert sw.percentile_b(50) == pytest.approx(1.0)


def test_sweep_validation():
    with pytest.raises(InputError):
        threshold_sweep(np.ones(2), np.ones(3))
    with pytest.raises(InputError):
        threshold_sweep(np.ones(2), np.ones(2), grid=[0.5, 0.1])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=25),
    st.integers(0, 10_000),
)
def test_sweep_curve_matches_direct(values, seed):
    est = np.array(values)
    truth = np.random.default_rng(seed).choice([0.0, 1.0, -2.0], size=est.size)
    grid = np.linspace(0, 3.5, 15)
    sw = threshold_sweep(est, truth, grid=grid)
    direct = [np.linalg.norm(np.where(np.abs(est) > b, est, 0) - truth) for b in grid]
    np.testing.assert_allclose(sw.curve, direct, atol=1e-12)
    assert sw.curve[0] == pytest.approx(np.linalg.norm(np.where(est != 0, est, 0) - truth))
    assert sw.best_error == min(sw.curve)


def test_support_recovered():
    truth = np.array([0.0, 1.0, -2.0])
    assert support_recovered(np.array([0.05, 0.9, -1.8]), truth, 0.1)
    assert not support_recovered(np.array([0.2, 0.9, -1.8]), truth, 0.1)


@pytest.mark.parametrize(
    "method, q",
    [("landweber", 1), ("soar", 2), ("hbf", 2), ("far", 1.5), ("ark", 2.5), ("nesterov", 1)],
)
def test_step_scaling(method, q):
    mc = MethodConfig(method)
    assert mc.step(16.0) == pytest.approx((DEFAULT_STEP[Method(method)] / 16.0) ** (1 / q))
    assert MethodConfig(method, dt=0.3).step(16.0) == 0.3


def test_config_json_round_trip(tmp_path):
    cfg = SimulationConfig(n=30, p=25, methods=[MethodConfig("landweber", dt_scale=0.5)], baselines=["ls"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = SimulationConfig.from_json(path)
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "bad",
    [{"p": 10}, {"beta_kind": "dense"}, {"error_dist": "t"}, {"stop": {"kind": "fixed"}}, {"baselines": ["enet"]}],
)
def test_config_validation(bad):
    with pytest.raises(InputError):
        SimulationConfig(**bad)


def test_config_unknown_key_and_bad_file(tmp_path):
    with pytest.raises(InputError, match="unknown config keys"):
        SimulationConfig.from_dict({"n": 5, "colour": 1})
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(InputError):
        SimulationConfig.from_json(tmp_path / "x.json")


def test_zero_noise_least_squares_exact():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 25))
    beta = gen_sparse_beta(25, seed=1)
    data = SimulatedData(RegressionProblem(X, X @ beta), beta, np.zeros(40))
    cfg = SimulationConfig(n=40, p=25, cond_target=None, methods=[], baselines=["ls"])
    res = _run_baseline("ls", data, thin_svd(data.problem), cfg)
    assert res.err_beta_hat <= 1e-8
    assert res.err_theta_hat <= 1e-8
    assert res.support_hat


def test_oracle_ridge_picks_grid_minimum():
    cfg = SimulationConfig(n=40, p=30, cond_target=None)
    data = simulate_data(cfg, 3)
    dec = thin_svd(data.problem)
    grid = (0.0, 1.0, 5.0, 20.0)
    alpha, est = oracle_ridge(data, dec, grid)
    errs = [np.linalg.norm(ridge_penalized(data.problem, a) - data.beta) for a in grid]
    assert alpha == grid[int(np.argmin(errs))]
    np.testing.assert_allclose(est, ridge_penalized(data.problem, alpha), atol=1e-10)
    assert ridge_spec(0.0, 40).method is Method.LS
    assert ridge_spec(4.0, 40).alpha == pytest.approx(0.1)


SMALL = SimulationConfig(
    n=60,
    p=40,
    cond_target=1e4,
    methods=[MethodConfig(m) for m in ("landweber", "showalter", "soar", "hbf", "far", "ark", "nesterov")],
    baselines=["ls", "sc", "ridge", "lasso"],
    stop=StopConfig("discrepancy", 1.0, 1, 3000),
    lasso_max_iter=200,
)


def test_run_case_small_all_methods():
    report = run_case(SMALL, seed=5)
    names = [r.method for r in report.results]
    assert names == ["landweber", "showalter", "soar", "hbf", "far", "ark", "nesterov", "ls", "sc", "ridge", "lasso"]
    for r in report.results:
        assert r.status == "ok", r
        assert r.err_beta_hat >= 0 and r.err_theta_hat <= r.err_beta_hat + 1e-12
        if r.bn_hat is not None:
            assert r.bn_hat == pytest.approx(round(r.bn_hat / 5e-4) * 5e-4)
    assert report.result("landweber").k0 >= 1
    csv_text = report.table_csv()
    assert csv_text.splitlines()[0].startswith("method,err_beta_hat,k0")
    assert len(csv_text.splitlines()) == 12


def test_run_case_records_divergence():
    cfg = SimulationConfig(
        n=30, p=25, cond_target=None, methods=[MethodConfig("landweber", dt=10.0)], baselines=["ls"],
        stop=StopConfig("discrepancy", 1e-6, 1, 500),
    )
    report = run_case(cfg, seed=0)
    assert report.result("landweber").status.startswith("diverged")
    assert report.result("ls").status == "ok"


def test_aosr_stop_config():
    cfg = SimulationConfig(n=40, p=30, cond_target=None, methods=[MethodConfig("landweber")], baselines=[],
                           stop=StopConfig("aosr", 1.0, 3, 2000))
    assert run_case(cfg, seed=1).result("landweber").k0 >= 3


def test_replicates_deterministic_across_threads():
    cfg = SimulationConfig(n=40, p=30, methods=[MethodConfig("landweber"), MethodConfig("hbf")], baselines=["ridge"])
    a = [r.to_json() for r in run_replicates(cfg, [1, 2, 3])]
    b = [r.to_json() for r in run_replicates(cfg, [1, 2, 3], threads=3)]
    assert a == b
    assert "runtime" not in a[0]


def test_full_case_config():
    cfg = full_case_one_config()
    assert (cfg.n, cfg.p) == (1000, 1000)
    assert cfg.methods[0].dt == 5e-7 and cfg.stop.k_max == 5000
