from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specreg.spectral import (
    InputError,
    RankZeroError,
    RegressionProblem,
    apply_spectral_filter,
    condition_number,
    read_csv_matrix,
    read_csv_vector,
    thin_svd,
    write_csv,
)


def test_problem_reshapes_vector_design():
    prob = RegressionProblem(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    assert prob.X.shape == (2, 1)
    assert (prob.n, prob.p) == (2, 1)


@pytest.mark.parametrize(
    "X, Y",
    [
        (np.ones((3, 2)), np.ones(4)),
        (np.array([[np.nan, 1.0]]), np.ones(1)),
        (np.ones((2, 2)), np.array([1.0, np.inf])),
    ],
)
def test_problem_rejects_bad_input(X, Y):
    with pytest.raises(InputError):
        RegressionProblem(X, Y)


def test_noise_norm_proxy():
    prob = RegressionProblem(np.eye(4), np.zeros(4), noise_scale=2.0)
    assert prob.noise_norm() == pytest.approx(4.0)
    assert RegressionProblem(np.eye(4), np.zeros(4)).noise_norm() is None


def test_rank_zero_design():
    with pytest.raises(RankZeroError, match="rank zero"):
        thin_svd(np.zeros((3, 2)))


def test_thin_svd_truncates_rank():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 2))
    X = A @ rng.standard_normal((2, 5))  # rank 2
    dec = thin_svd(X)
    assert dec.rank == 2
    assert np.all(np.diff(dec.singular_values) <= 0)
    np.testing.assert_allclose(dec.reconstruct(), X, atol=1e-12)


def test_identity_filter_recovers_least_squares():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 5))
    Y = rng.standard_normal(12)
    dec = thin_svd(X)
    beta = apply_spectral_filter(dec, lambda lam: 1.0 / lam, Y)
    np.testing.assert_allclose(beta, np.linalg.lstsq(X, Y, rcond=None)[0], atol=1e-10)


def test_filter_accepts_stacked_responses():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((8, 4))
    Ys = rng.standard_normal((8, 3))
    dec = thin_svd(X)
    g = lambda lam: 1.0 / (lam + 0.3)  # noqa: E731
    stacked = apply_spectral_filter(dec, g, Ys)
    for j in range(3):
        np.testing.assert_allclose(stacked[:, j], apply_spectral_filter(dec, g, Ys[:, j]))


def test_filter_shape_and_finiteness_checked():
    dec = thin_svd(np.eye(3))
    with pytest.raises(InputError):
        apply_spectral_filter(dec, lambda lam: np.ones(2), np.ones(3))
    with pytest.raises(InputError):
        apply_spectral_filter(dec, lambda lam: lam * np.inf, np.ones(3))


def test_condition_number_diagonal():
    assert condition_number(thin_svd(np.diag([10.0, 2.0, 0.5]))) == pytest.approx(20.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(1, 9), st.integers(0, 10_000))
def test_scaled_eigenvalues_match_gram(n, p, seed):
    X = np.random.default_rng(seed).standard_normal((n, p))
    dec = thin_svd(X)
    eig = np.sort(np.linalg.eigvalsh(X.T @ X / n))[::-1][: dec.rank]
    np.testing.assert_allclose(dec.scaled_eigenvalues, eig, atol=1e-10)


def test_csv_round_trip(tmp_path):
    arr = np.array([[0.1, 1e-17, -3.0], [np.pi, 2.0, 5.5]])
    write_csv(tmp_path / "a.csv", arr)
    np.testing.assert_array_equal(read_csv_matrix(tmp_path / "a.csv"), arr)
    write_csv(tmp_path / "v.csv", arr[0])
    np.testing.assert_array_equal(read_csv_vector(tmp_path / "v.csv"), arr[0])


def test_csv_parse_failure(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\nx,4\n")
    with pytest.raises(InputError):
        read_csv_matrix(tmp_path / "bad.csv")
    write_csv(tmp_path / "m.csv", np.ones((2, 2)))
    with pytest.raises(InputError):
        read_csv_vector(tmp_path / "m.csv")
