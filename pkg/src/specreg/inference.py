"""Wild bootstrap confidence regions, max statistics and the Gaussian reference law."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import Fit, fit_closed_form, fit_iterative, residual_variance, tau_debiased, tau_plain, threshold
from .filters import FilterSpec, Method, bias_value, debiased_generator_value, generator_value
from .simulation import (
    MethodConfig,
    SimulatedData,
    SimulationConfig,
    oracle_ridge,
    ridge_spec,
    simulate_data,
    threshold_sweep,
)
from .solvers import StoppingRule
from .spectral import RegressionProblem, SpectralDecomposition, thin_svd

# replicates per batch; fixed so results do not depend on the thread count
CHUNK = 64

# plateau percentiles used for the coverage study, per method
DEFAULT_PERCENTILE = {
    Method.SC: 50.0,
    Method.RIDGE: 0.0,
    Method.LANDWEBER: 72.5,
    Method.SHOWALTER: 90.0,
    Method.ARK: 0.0,
    Method.SOAR: 5.0,
    Method.NESTEROV: 95.0,
}


def upper_quantile(samples, level: float) -> float:
    """Order statistic ``ceil(level * B)`` (1-based) of the samples."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("no samples")
    k = math.ceil(level * s.size - 1e-9)
    return float(s[min(max(k, 1), s.size) - 1])


@dataclass
class BootstrapReport:
    c_hat: float
    c_tilde: float
    e_hat_samples: np.ndarray
    e_tilde_samples: np.ndarray
    alpha_star: float
    B: int
    seed: int
    b_n: float
    sigma2_hat: float
    sigma2_tilde: float
    degenerate: bool = False

    def covers_hat(self, theta_hat, truth) -> bool:
        return bool(np.max(np.abs(np.asarray(theta_hat) - truth)) <= self.c_hat)

    def covers_tilde(self, theta_tilde, truth) -> bool:
        return bool(np.max(np.abs(np.asarray(theta_tilde) - truth)) <= self.c_tilde)

    def quantiles(self, level: float) -> tuple[float, float]:
        return upper_quantile(self.e_hat_samples, level), upper_quantile(self.e_tilde_samples, level)

    def to_dict(self) -> dict:
        return {
            "c_hat": self.c_hat,
            "c_tilde": self.c_tilde,
            "e_hat_samples": [float(v) for v in self.e_hat_samples],
            "e_tilde_samples": [float(v) for v in self.e_tilde_samples],
            "alpha_star": self.alpha_star,
            "B": self.B,
            "seed": self.seed,
            "b_n": self.b_n,
            "sigma2_hat": self.sigma2_hat,
            "sigma2_tilde": self.sigma2_tilde,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _filter_matrix_parts(dec: SpectralDecomposition, spec: FilterSpec, debiased: bool) -> np.ndarray:
    lam = dec.scaled_eigenvalues
    g = debiased_generator_value(spec, lam) if debiased else generator_value(spec, lam)
    return np.asarray(g, dtype=float) * dec.singular_values / dec.n


def _replicate_streams(seed: int, B: int):
    return np.random.SeedSequence(seed).spawn(B)


def wild_bootstrap(
    problem: RegressionProblem,
    spec: FilterSpec,
    b_n: float,
    alpha_star: float = 0.05,
    B: int = 500,
    seed: int = 0,
    *,
    beta_hat=None,
    beta_tilde=None,
    dec: SpectralDecomposition | None = None,
    threads: int = 1,
) -> BootstrapReport:
    """Wild bootstrap for the simultaneous regions around the thresholded estimators.

    Refits apply the spectral filter of ``spec`` (no re-stopping inside
    replicates).  Replicate ``b`` draws its hat and tilde errors from its own
    child stream of ``seed``, so the report is identical for any ``threads``.
    ``beta_hat`` and ``beta_tilde`` default to the spectral estimates; pass
    the iterative fit to bootstrap around it instead.  A zero residual
    variance yields an all-zero, ``degenerate`` report.
    """
    if not 0 < alpha_star < 1:
        raise ValueError("alpha_star must lie in (0, 1)")
    if B < 1:
        raise ValueError("B must be at least 1")
    if not b_n >= 0:
        raise ValueError("b_n must be nonnegative")
    dec = dec or thin_svd(problem)
    X = problem.X
    w_hat = _filter_matrix_parts(dec, spec, False)
    w_tilde = _filter_matrix_parts(dec, spec, True)
    if beta_hat is None:
        beta_hat = dec.V @ (w_hat * (dec.U.T @ problem.Y))
    if beta_tilde is None:
        beta_tilde = dec.V @ (w_tilde * (dec.U.T @ problem.Y))
    theta_hat, n_hat = threshold(beta_hat, b_n)
    theta_tilde, n_tilde = threshold(beta_tilde, b_n)
    s2_hat = residual_variance(problem, theta_hat)
    s2_tilde = residual_variance(problem, theta_tilde)
    mask_hat = np.zeros(problem.p, dtype=bool)
    mask_hat[n_hat] = True
    mask_tilde = np.zeros(problem.p, dtype=bool)
    mask_tilde[n_tilde] = True

    # the refit of X theta is common to every replicate
    base_hat = dec.V @ (w_hat * (dec.U.T @ (X @ theta_hat)))
    base_tilde = dec.V @ (w_tilde * (dec.U.T @ (X @ theta_tilde)))
    sd_hat, sd_tilde = math.sqrt(s2_hat), math.sqrt(s2_tilde)
    streams = _replicate_streams(seed, B)
    n = problem.n

    def run_chunk(start: int):
        stop = min(start + CHUNK, B)
        m = stop - start
        E_hat = np.empty((n, m))
        E_tilde = np.empty((n, m))
        for j, ss in enumerate(streams[start:stop]):
            rng = np.random.default_rng(ss)
            E_hat[:, j] = rng.standard_normal(n)
            E_tilde[:, j] = rng.standard_normal(n)
        R_hat = base_hat[:, None] + dec.V @ (w_hat[:, None] * (dec.U.T @ (sd_hat * E_hat)))
        R_tilde = base_tilde[:, None] + dec.V @ (w_tilde[:, None] * (dec.U.T @ (sd_tilde * E_tilde)))
        T_hat = np.where(mask_hat[:, None], R_hat, 0.0)
        T_tilde = np.where(mask_tilde[:, None], R_tilde, 0.0)
        e_hat = np.max(np.abs(T_hat - theta_hat[:, None]), axis=0)
        e_tilde = np.max(np.abs(T_tilde - theta_tilde[:, None]), axis=0)
        return e_hat, e_tilde

    starts = list(range(0, B, CHUNK))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, starts))
    else:
        parts = [run_chunk(s) for s in starts]
    e_hat = np.concatenate([p[0] for p in parts])
    e_tilde = np.concatenate([p[1] for p in parts])
    level = 1.0 - alpha_star
    return BootstrapReport(
        c_hat=upper_quantile(e_hat, level),
        c_tilde=upper_quantile(e_tilde, level),
        e_hat_samples=e_hat,
        e_tilde_samples=e_tilde,
        alpha_star=alpha_star,
        B=B,
        seed=int(seed),
        b_n=float(b_n),
        sigma2_hat=s2_hat,
        sigma2_tilde=s2_tilde,
        degenerate=(s2_hat == 0.0 or s2_tilde == 0.0),
    )


def max_statistic(estimate, truth, tau=None) -> float:
    """``max_i |estimate_i - truth_i| / tau_i`` (``tau`` defaults to ones)."""
    est = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError("estimate and truth differ in length")
    scale = 1.0 if tau is None else np.asarray(getattr(tau, "values", tau), dtype=float)
    return float(np.max(np.abs(est - truth) / scale))


def reference_samples(
    dec: SpectralDecomposition,
    spec: FilterSpec,
    sigma: float,
    M: int = 20000,
    seed: int = 0,
    debiased: bool = True,
) -> np.ndarray:
    """Sorted Monte-Carlo draws of ``max_i |sum_k v_ik c_k xi_k| / tau_i``.

    ``c_k = (1 + r) g sqrt(lam_k) / n`` with ``xi_k ~ Normal(0, sigma^2)``
    (``debiased=False`` drops the ``(1 + r)`` factor and uses ``tau*``).
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    lam = dec.scaled_eigenvalues
    g = np.asarray(generator_value(spec, lam), dtype=float)
    c = g * dec.singular_values / dec.n
    if debiased:
        c = c * (1.0 + np.asarray(bias_value(spec, lam), dtype=float))
        tau = tau_debiased(dec, spec).values
    else:
        tau = tau_plain(dec, spec).values
    A = (dec.V * c[None, :]) / tau[:, None]
    rng = np.random.default_rng(seed)
    out = np.empty(M)
    for start in range(0, M, 1024):
        m = min(1024, M - start)
        xi = sigma * rng.standard_normal((dec.rank, m))
        out[start : start + m] = np.max(np.abs(A @ xi), axis=0)
    return np.sort(out)


def gaussian_reference_cdf(
    dec: SpectralDecomposition,
    spec: FilterSpec,
    sigma: float,
    x,
    M: int = 20000,
    seed: int = 0,
    debiased: bool = True,
):
    """Monte-Carlo estimate of ``H(x)`` (or ``H*(x)`` with ``debiased=False``)."""
    samples = reference_samples(dec, spec, sigma, M, seed, debiased)
    x_arr = np.asarray(x, dtype=float)
    vals = np.searchsorted(samples, x_arr, side="right") / samples.size
    return float(vals) if x_arr.ndim == 0 else vals


# ---------------------------------------------------------------------------
# Coverage experiments

@dataclass
class CoverageConfig:
    """Coverage study for one method on simulated data.

    Iterative methods stop by the adjusted optimal rule; Ridge uses the
    oracle grid penalty.  ``b_n`` is the ``percentile``-th point of the
    argmin plateau of the oracle threshold sweep (separately for the plain
    and debiased estimates) unless ``b_n`` is given.
    """

    simulation: SimulationConfig
    method: str
    dt_scale: float | None = None
    params: dict = field(default_factory=dict)
    percentile: float | None = None
    b_n: float | None = None
    alpha_star: float = 0.05
    k_min: int = 1
    k_max: int = 5000

    def resolved_percentile(self) -> float:
        if self.percentile is not None:
            return float(self.percentile)
        return DEFAULT_PERCENTILE.get(Method(self.method), 50.0)


@dataclass
class CoverageResult:
    coverage_hat: float
    coverage_tilde: float
    runs: int
    mean_err_theta_hat: float
    mean_err_theta_tilde: float
    covered_hat: list[bool]
    covered_tilde: list[bool]

    def to_dict(self) -> dict:
        return {
            "coverage_hat": self.coverage_hat,
            "coverage_tilde": self.coverage_tilde,
            "runs": self.runs,
            "mean_err_theta_hat": self.mean_err_theta_hat,
            "mean_err_theta_tilde": self.mean_err_theta_tilde,
            "covered_hat": self.covered_hat,
            "covered_tilde": self.covered_tilde,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _coverage_fit(cfg: CoverageConfig, data: SimulatedData, dec: SpectralDecomposition) -> Fit:
    method = Method(cfg.method)
    if method is Method.RIDGE:
        alpha_raw, _ = oracle_ridge(data, dec)
        spec = ridge_spec(alpha_raw, data.problem.n)
        return fit_closed_form(data.problem, spec, dec)
    mc = MethodConfig(cfg.method, dt_scale=cfg.dt_scale, params=cfg.params)
    dt = mc.step(float(dec.singular_values[0] ** 2))
    stop = StoppingRule.adjusted_optimal(data.beta, cfg.k_min, cfg.k_max)
    return fit_iterative(data.problem, method, dt, stop, **mc.resolved_params())


def coverage_run(cfg: CoverageConfig, seed: int, B: int) -> tuple[bool, bool, float, float]:
    """One simulated data set: fit, bootstrap, and test whether the truth is covered."""
    s_data, s_boot = np.random.SeedSequence(seed).spawn(2)
    data_seed = int(s_data.generate_state(1)[0])
    boot_seed = int(s_boot.generate_state(1)[0])
    data = simulate_data(cfg.simulation, data_seed)
    dec = thin_svd(data.problem)
    fit = _coverage_fit(cfg, data, dec)
    q = cfg.resolved_percentile()
    if cfg.b_n is not None:
        b_hat = b_tilde = float(cfg.b_n)
    else:
        b_hat = threshold_sweep(fit.beta_hat, data.beta).percentile_b(q)
        b_tilde = threshold_sweep(fit.beta_tilde, data.beta).percentile_b(q)
    rep_hat = wild_bootstrap(
        data.problem, fit.spec, b_hat, cfg.alpha_star, B, boot_seed,
        beta_hat=fit.beta_hat, beta_tilde=fit.beta_tilde, dec=dec,
    )
    if b_tilde == b_hat:
        rep_tilde = rep_hat
    else:
        rep_tilde = wild_bootstrap(
            data.problem, fit.spec, b_tilde, cfg.alpha_star, B, boot_seed,
            beta_hat=fit.beta_hat, beta_tilde=fit.beta_tilde, dec=dec,
        )
    theta_hat, _ = threshold(fit.beta_hat, b_hat)
    theta_tilde, _ = threshold(fit.beta_tilde, b_tilde)
    return (
        rep_hat.covers_hat(theta_hat, data.beta),
        rep_tilde.covers_tilde(theta_tilde, data.beta),
        float(np.linalg.norm(theta_hat - data.beta)),
        float(np.linalg.norm(theta_tilde - data.beta)),
    )


def coverage_experiment(cfg: CoverageConfig, runs: int, B: int, seed: int, threads: int = 1) -> CoverageResult:
    """Empirical coverage of the plain (I) and debiased (II) regions over ``runs`` data sets."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    run_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda s: coverage_run(cfg, s, B), run_seeds))
    else:
        out = [coverage_run(cfg, s, B) for s in run_seeds]
    ch = [o[0] for o in out]
    ct = [o[1] for o in out]
    return CoverageResult(
        coverage_hat=sum(ch) / runs,
        coverage_tilde=sum(ct) / runs,
        runs=runs,
        mean_err_theta_hat=float(np.mean([o[2] for o in out])),
        mean_err_theta_tilde=float(np.mean([o[3] for o in out])),
        covered_hat=ch,
        covered_tilde=ct,
    )
