"""Plain, debiased and thresholded estimators, variance and tau statistics.

Also hosts the comparison baselines (least squares, spectral cut-off,
ridge with an unscaled penalty, and the Lasso).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filters import (
    ClosedFormUnavailable,
    FilterSpec,
    Method,
    bias_value,
    debiased_generator_value,
    generator_value,
)
from .solvers import (
    ITERATIVE_METHODS,
    StoppingRule,
    debias_two_pass,
    equivalent_filter,
    run_method,
)
from .spectral import RegressionProblem, SpectralDecomposition, apply_spectral_filter, thin_svd


class ConvergenceWarning(RuntimeWarning):
    pass


def _as_closed_form(fn, spec: FilterSpec):
    def g_at(lam):
        try:
            return fn(spec, lam)
        except ClosedFormUnavailable as exc:
            raise ClosedFormUnavailable(
                f"{spec.method.value}: closed form unavailable ({exc}); use the iterative solver"
            ) from exc

    return g_at


def estimate_spectral(dec: SpectralDecomposition, spec: FilterSpec, Y, n: int | None = None) -> np.ndarray:
    """``beta_hat = (1/n) V g_alpha(L/n) S U^T Y``."""
    return apply_spectral_filter(dec, _as_closed_form(generator_value, spec), Y, n)


def estimate_debiased_spectral(dec: SpectralDecomposition, spec: FilterSpec, Y, n: int | None = None) -> np.ndarray:
    """Debiased estimator through its generator ``(1 + r) g``."""
    return apply_spectral_filter(dec, _as_closed_form(debiased_generator_value, spec), Y, n)


def debias(beta_hat, spec: FilterSpec, dec: SpectralDecomposition) -> np.ndarray:
    """``beta_hat + r_alpha(X^T X / n) beta_hat`` for ``beta_hat`` in the row space of X.

    Components outside the row space (where ``r`` would act on the zero
    eigenvalue) are passed through unchanged.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    r = np.asarray(bias_value(spec, dec.scaled_eigenvalues), dtype=float)
    coeffs = dec.V.T @ beta_hat
    return beta_hat + dec.V @ (r * coeffs)


def threshold(beta, b_n: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero every coordinate with ``|beta_i| <= b_n``.

    Returns the thresholded vector and the sorted 0-based indices kept
    (``|beta_i| > b_n``, strict).
    """
    if not b_n >= 0:
        raise ValueError("threshold must be nonnegative")
    beta = np.asarray(beta, dtype=float)
    keep = np.abs(beta) > b_n
    return np.where(keep, beta, 0.0), np.flatnonzero(keep)


def residual_variance(problem: RegressionProblem, theta) -> float:
    """``(1/n) sum_i (Y_i - x_i . theta)^2``."""
    resid = problem.Y - problem.X @ np.asarray(theta, dtype=float)
    return float(resid @ resid / problem.n)


@dataclass(frozen=True)
class TauVector:
    values: np.ndarray
    kind: str  # "debiased" or "plain"


def _tau(dec: SpectralDecomposition, spec: FilterSpec, n: int, with_bias: bool) -> np.ndarray:
    lam = dec.singular_values**2
    scaled = lam / n
    g = np.asarray(_as_closed_form(generator_value, spec)(scaled), dtype=float)
    w = g * g * lam / n**2
    if with_bias:
        r = np.asarray(bias_value(spec, scaled), dtype=float)
        w = w * (1.0 + r) ** 2
    return np.sqrt((dec.V**2) @ w + 1.0 / n)


def tau_debiased(dec: SpectralDecomposition, spec: FilterSpec, n: int | None = None) -> TauVector:
    """``tau_i = sqrt(sum_k v_ik^2 (1 + r)^2 g^2 lam_k / n^2 + 1/n)``."""
    return TauVector(_tau(dec, spec, n or dec.n, True), "debiased")


def tau_plain(dec: SpectralDecomposition, spec: FilterSpec, n: int | None = None) -> TauVector:
    """Same as :func:`tau_debiased` without the ``(1 + r)`` factor."""
    return TauVector(_tau(dec, spec, n or dec.n, False), "plain")


# ---------------------------------------------------------------------------
# Fitting a bundle

def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass
class EstimateBundle:
    """All estimates produced by one fit at threshold ``b_n``."""

    method: str
    spec: dict
    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    theta_hat: np.ndarray
    theta_tilde: np.ndarray
    n_hat: np.ndarray
    n_tilde: np.ndarray
    b_n: float
    sigma2_hat: float
    sigma2_tilde: float
    k0: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "spec": self.spec,
            "beta_hat": [float(v) for v in self.beta_hat],
            "beta_tilde": [float(v) for v in self.beta_tilde],
            "theta_hat": [float(v) for v in self.theta_hat],
            "theta_tilde": [float(v) for v in self.theta_tilde],
            "n_hat": [int(i) for i in self.n_hat],
            "n_tilde": [int(i) for i in self.n_tilde],
            "b_n": float(self.b_n),
            "sigma2_hat": _json_float(self.sigma2_hat),
            "sigma2_tilde": _json_float(self.sigma2_tilde),
            "k0": self.k0,
            "extra": self.extra,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> EstimateBundle:
        arr = lambda key: np.asarray(d[key], dtype=float)  # noqa: E731
        idx = lambda key: np.asarray(d[key], dtype=int)  # noqa: E731
        return cls(
            method=d["method"],
            spec=d["spec"],
            beta_hat=arr("beta_hat"),
            beta_tilde=arr("beta_tilde"),
            theta_hat=arr("theta_hat"),
            theta_tilde=arr("theta_tilde"),
            n_hat=idx("n_hat"),
            n_tilde=idx("n_tilde"),
            b_n=float(d["b_n"]),
            sigma2_hat=float(d["sigma2_hat"]),
            sigma2_tilde=float(d["sigma2_tilde"]),
            k0=d.get("k0"),
            extra=d.get("extra", {}),
        )


@dataclass
class Fit:
    """Plain and debiased estimates plus the filter they correspond to."""

    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    spec: FilterSpec
    k0: int | None = None
    dt: float | None = None
    params: dict = field(default_factory=dict)


def fit_closed_form(problem: RegressionProblem, spec: FilterSpec, dec: SpectralDecomposition | None = None) -> Fit:
    dec = dec or thin_svd(problem)
    beta_hat = estimate_spectral(dec, spec, problem.Y)
    beta_tilde = estimate_debiased_spectral(dec, spec, problem.Y)
    return Fit(beta_hat, beta_tilde, spec)


def fit_iterative(problem: RegressionProblem, method, dt: float, stop: StoppingRule, **params) -> Fit:
    """Run the solver, then debias by the two-pass scheme with the same ``k0``."""
    method = Method(method)
    state, k0 = run_method(method, problem, dt, stop, **params)
    if k0 < 1:
        raise ValueError("iterative fit needs at least one step")
    beta_tilde = debias_two_pass(problem, method, dt, k0, state.beta, **params)
    spec_params = {k: v for k, v in params.items() if k in ("eta", "kappa", "s_star", "omega", "vartheta", "rho")}
    spec = equivalent_filter(method, k0, dt, problem.n, **spec_params)
    return Fit(state.beta, beta_tilde, spec, k0=k0, dt=dt, params=dict(params))


def make_bundle(problem: RegressionProblem, fit: Fit, b_n: float) -> EstimateBundle:
    theta_hat, n_hat = threshold(fit.beta_hat, b_n)
    theta_tilde, n_tilde = threshold(fit.beta_tilde, b_n)
    extra = {}
    if fit.dt is not None:
        extra["dt"] = fit.dt
    extra.update({k: v for k, v in fit.params.items() if isinstance(v, (int, float, bool, str))})
    return EstimateBundle(
        method=fit.spec.method.value,
        spec=fit.spec.to_dict(),
        beta_hat=fit.beta_hat,
        beta_tilde=fit.beta_tilde,
        theta_hat=theta_hat,
        theta_tilde=theta_tilde,
        n_hat=n_hat,
        n_tilde=n_tilde,
        b_n=float(b_n),
        sigma2_hat=residual_variance(problem, theta_hat),
        sigma2_tilde=residual_variance(problem, theta_tilde),
        k0=fit.k0,
        extra=extra,
    )


# ---------------------------------------------------------------------------
# Baselines

def least_squares(problem: RegressionProblem, dec: SpectralDecomposition | None = None) -> np.ndarray:
    """Minimum-norm least squares through the thin SVD."""
    dec = dec or thin_svd(problem)
    return dec.V @ ((dec.U.T @ problem.Y) / dec.singular_values)


def spectral_cutoff(problem: RegressionProblem, k_r: int, dec: SpectralDecomposition | None = None) -> np.ndarray:
    """Keep the ``k_r`` largest singular modes."""
    dec = dec or thin_svd(problem)
    if not 1 <= k_r:
        raise ValueError("k_r must be at least 1")
    k_r = min(k_r, dec.rank)
    U, s, V = dec.U[:, :k_r], dec.singular_values[:k_r], dec.V[:, :k_r]
    return V @ ((U.T @ problem.Y) / s)


def ridge_penalized(problem: RegressionProblem, alpha: float, dec: SpectralDecomposition | None = None) -> np.ndarray:
    """``(X^T X + alpha I)^+ X^T Y`` with an unscaled penalty ``alpha >= 0``."""
    if not alpha >= 0:
        raise ValueError("alpha must be nonnegative")
    dec = dec or thin_svd(problem)
    s = dec.singular_values
    return dec.V @ (s / (s * s + alpha) * (dec.U.T @ problem.Y))


def ridge_path(problem: RegressionProblem, alphas, dec: SpectralDecomposition | None = None) -> np.ndarray:
    """Ridge estimates for every penalty in ``alphas`` (rows of the result)."""
    dec = dec or thin_svd(problem)
    s = dec.singular_values
    alphas = np.asarray(alphas, dtype=float)
    w = s[None, :] / (s[None, :] ** 2 + alphas[:, None])
    return (w * (dec.U.T @ problem.Y)[None, :]) @ dec.V.T


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class LassoResult:
    beta: np.ndarray
    iterations: int
    gap: float
    converged: bool


def lasso(
    problem: RegressionProblem,
    alpha: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    beta0=None,
    lipschitz: float | None = None,
) -> LassoResult:
    """Minimize ``(1/2n) ||Y - X b||^2 + alpha ||b||_1`` by accelerated proximal gradient.

    Convergence is declared when the proximal-gradient fixed-point residual
    ``L ||b - prox(b - grad/L)||_inf`` falls below ``tol``.  Non-convergence
    issues a :class:`ConvergenceWarning` carrying the final residual.
    """
    if not alpha >= 0:
        raise ValueError("alpha must be nonnegative")
    X, Y, n = problem.X, problem.Y, problem.n
    L = lipschitz if lipschitz is not None else float(np.linalg.norm(X, 2) ** 2) / n
    if L == 0:
        return LassoResult(np.zeros(problem.p), 0, 0.0, True)
    XtY = X.T @ Y / n
    beta = np.zeros(problem.p) if beta0 is None else np.array(beta0, dtype=float)
    y = beta.copy()
    t = 1.0
    gap = math.inf
    for it in range(1, max_iter + 1):
        grad = X.T @ (X @ y) / n - XtY
        nxt = _soft(y - grad / L, alpha / L)
        # restart momentum when the objective direction turns
        if (y - nxt) @ (nxt - beta) > 0:
            t = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = nxt + (t - 1.0) / t_next * (nxt - beta)
        beta, t = nxt, t_next
        if it % 10 == 0 or it == max_iter:
            g_b = X.T @ (X @ beta) / n - XtY
            gap = L * float(np.max(np.abs(beta - _soft(beta - g_b / L, alpha / L))))
            if gap <= tol:
                return LassoResult(beta, it, gap, True)
    warnings.warn(f"lasso did not converge: fixed-point residual {gap:.3e}", ConvergenceWarning, stacklevel=2)
    return LassoResult(beta, max_iter, gap, False)


def baseline_estimate(kind: str, problem: RegressionProblem, param: float | int | None = None) -> np.ndarray:
    """Baselines: ``ls``, ``sc`` (``param`` = modes kept), ``ridge`` (unscaled
    penalty), ``lasso`` (penalty on the 1/(2n)-scaled loss)."""
    kind = kind.lower()
    if kind == "ls":
        return least_squares(problem)
    if kind == "sc":
        return spectral_cutoff(problem, int(param))
    if kind == "ridge":
        return ridge_penalized(problem, float(param))
    if kind == "lasso":
        return lasso(problem, float(param)).beta
    raise ValueError(f"unknown baseline {kind!r}")


CLOSED_FORM_ONLY = (Method.LS, Method.SC, Method.RIDGE)

__all__ = [
    "ConvergenceWarning",
    "EstimateBundle",
    "Fit",
    "ITERATIVE_METHODS",
    "LassoResult",
    "TauVector",
    "baseline_estimate",
    "debias",
    "estimate_debiased_spectral",
    "estimate_spectral",
    "fit_closed_form",
    "fit_iterative",
    "lasso",
    "least_squares",
    "make_bundle",
    "residual_variance",
    "ridge_path",
    "ridge_penalized",
    "spectral_cutoff",
    "tau_debiased",
    "tau_plain",
    "threshold",
]
