"""Synthetic data generators, threshold sweeps and experiment runners."""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimators import (
    ConvergenceWarning,
    Fit,
    estimate_debiased_spectral,
    estimate_spectral,
    fit_iterative,
    lasso,
    least_squares,
    ridge_path,
    threshold,
)
from .filters import FilterSpec, Method
from .solvers import ITERATIVE_METHODS, DivergenceError, StoppingRule
from .spectral import InputError, RegressionProblem, SpectralDecomposition, thin_svd

SPARSE_VALUES = (2.0, -2.0, 1.0, -1.0)
SPARSE_EACH = 5
ERROR_VARIANCE = 4.0
LAPLACE_SCALE = math.sqrt(2.0)
THRESHOLD_STEP = 5e-4
RIDGE_GRID = tuple(np.round(np.arange(0, 2001) * 0.1, 10))
LASSO_GRID = tuple(np.round(np.arange(0, 1001) * 0.001, 10))

# step-size scale and time order q (dt = dt_scale / ||X||^(2/q))
DEFAULT_STEP = {
    Method.LANDWEBER: 0.25,
    Method.SHOWALTER: 0.25,
    Method.NESTEROV: 0.25,
    Method.SOAR: 0.35,
    Method.HBF: 0.35,
    Method.FAR: 0.25,
    Method.ARK: 0.001,
}
DEFAULT_PARAMS = {
    Method.HBF: {"eta": 5.0},
    Method.ARK: {"kappa": 1.5},
    Method.SOAR: {"s_star": 0.5},
    Method.NESTEROV: {"omega": 5.0},
    Method.FAR: {"vartheta": 1.5},
}


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def gen_design(
    n: int,
    p: int,
    cov_diag: float = 2.0,
    cov_offdiag: float = 0.5,
    cond_target: float | None = None,
    seed=None,
    reshape: str = "minimal",
) -> np.ndarray:
    """Rows i.i.d. Normal(0, Sigma) with equicorrelated ``Sigma``.

    ``Sigma`` has ``cov_diag`` on the diagonal and ``cov_offdiag`` elsewhere;
    rows are drawn exactly as ``sqrt(d - o) z + sqrt(o) w 1``.

    With ``cond_target`` the singular values are adjusted so the condition
    number is at least the target, keeping both singular-vector bases:

    ``"minimal"``
        leave the spectrum alone if it already qualifies, otherwise lower
        only the smallest singular value to ``sigma_max / cond_target``;
    ``"loglinear"``
        replace the whole spectrum by a log-linear ramp from ``sigma_max``
        to ``sigma_max / cond_target``.

    Targets are undershot by a relative 1e-8 so the bound survives rounding.
    """
    if n < 1 or p < 1:
        raise InputError("n and p must be positive")
    if not cov_diag > cov_offdiag >= 0:
        raise InputError("covariance is not positive definite: need cov_diag > cov_offdiag >= 0")
    if cond_target is not None and not cond_target > 1:
        raise InputError("cond_target must exceed 1")
    if reshape not in ("minimal", "loglinear"):
        raise InputError(f"unknown reshape rule {reshape!r}")
    rng = _rng(seed)
    z = rng.standard_normal((n, p))
    w = rng.standard_normal((n, 1))
    X = math.sqrt(cov_diag - cov_offdiag) * z + math.sqrt(cov_offdiag) * w
    if cond_target is None:
        return X
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    floor = s[0] / (cond_target * (1 + 1e-8))
    if reshape == "minimal":
        if s[-1] <= floor:
            return X
        s = s.copy()
        s[-1] = floor
    else:
        s = s[0] * np.logspace(0.0, math.log10(floor / s[0]), s.size)
    return (U * s) @ Vt


def gen_sparse_beta(p: int, seed=None) -> np.ndarray:
    """Five entries each of 2, -2, 1, -1 at random positions, zeros elsewhere."""
    k = SPARSE_EACH * len(SPARSE_VALUES)
    if p < k:
        raise InputError(f"sparse coefficients need p >= {k}")
    rng = _rng(seed)
    beta = np.zeros(p)
    pos = rng.choice(p, size=k, replace=False)
    beta[pos] = np.repeat(SPARSE_VALUES, SPARSE_EACH)
    return beta


def gen_uniform_beta(p: int, low: float = -2.0, high: float = 2.0, seed=None) -> np.ndarray:
    return _rng(seed).uniform(low, high, size=p)


def gen_errors(n: int, dist: str = "normal", seed=None) -> np.ndarray:
    """Variance-4 errors: Normal(0, 4) or Laplace(0, sqrt 2) by inverse CDF."""
    if n < 1:
        raise InputError("n must be positive")
    rng = _rng(seed)
    if dist == "normal":
        return math.sqrt(ERROR_VARIANCE) * rng.standard_normal(n)
    if dist == "laplace":
        u = rng.uniform(-0.5, 0.5, size=n)
        return -LAPLACE_SCALE * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    raise InputError(f"unknown error distribution {dist!r}")


# ---------------------------------------------------------------------------
# Threshold sweeps

@dataclass
class SweepResult:
    grid: np.ndarray
    curve: np.ndarray
    best_b: float
    best_error: float
    mean_b: float
    plateau: tuple[float, float]

    def percentile_b(self, q: float) -> float:
        """Threshold at percentile ``q`` in [0, 100] of the argmin plateau."""
        lo, hi = self.plateau
        return lo + (hi - lo) * q / 100.0


def threshold_grid(beta, step: float = THRESHOLD_STEP) -> np.ndarray:
    top = float(np.max(np.abs(beta))) if np.size(beta) else 0.0
    count = int(math.floor(top / step + 1e-9)) + 1
    return np.arange(count + 1) * step


def threshold_sweep(beta_estimate, truth, grid=None, step: float = THRESHOLD_STEP) -> SweepResult:
    """Error ``||threshold(beta, b) - truth||`` over an ascending grid of ``b``.

    Ties resolve to the smallest ``b``; ``mean_b`` averages all minimizers
    and ``plateau`` is the range of the minimizing grid points.
    """
    est = np.asarray(beta_estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InputError("estimate and truth differ in length")
    grid = threshold_grid(est, step) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise InputError("threshold grid must be nonempty, nonnegative and ascending")
    order = np.argsort(np.abs(est), kind="stable")
    mags = np.abs(est)[order]
    kept_sq = ((est - truth) ** 2)[order]
    drop_sq = (truth**2)[order]
    cum_kept = np.concatenate(([0.0], np.cumsum(kept_sq)))
    cum_drop = np.concatenate(([0.0], np.cumsum(drop_sq)))
    # number of coordinates zeroed at each threshold (|est| <= b)
    dropped = np.searchsorted(mags, grid, side="right")
    sq = cum_kept[-1] - cum_kept[dropped] + cum_drop[dropped]
    curve = np.sqrt(np.maximum(sq, 0.0))
    best_err = curve.min()
    winners = np.flatnonzero(curve == best_err)
    return SweepResult(
        grid=grid,
        curve=curve,
        best_b=float(grid[winners[0]]),
        best_error=float(best_err),
        mean_b=float(grid[winners].mean()),
        plateau=(float(grid[winners[0]]), float(grid[winners[-1]])),
    )


def support_recovered(beta_estimate, truth, b: float) -> bool:
    _, sel = threshold(beta_estimate, b)
    return bool(np.array_equal(sel, np.flatnonzero(np.asarray(truth) != 0)))


# ---------------------------------------------------------------------------
# Configuration and reports

@dataclass
class MethodConfig:
    """One method in an experiment.

    ``dt`` overrides the default step ``dt_scale / ||X||^(2/q)`` with time
    order ``q`` (1 for first-order flows, 2 for SOAR/HBF, ``vartheta`` for
    FAR, ``kappa + 1`` for AR-kappa).
    """

    method: str
    dt: float | None = None
    dt_scale: float | None = None
    params: dict = field(default_factory=dict)

    def resolved_params(self) -> dict:
        m = Method(self.method)
        out = dict(DEFAULT_PARAMS.get(m, {}))
        out.update(self.params)
        return out

    def step(self, op_norm_sq: float) -> float:
        if self.dt is not None:
            return float(self.dt)
        m = Method(self.method)
        scale = self.dt_scale if self.dt_scale is not None else DEFAULT_STEP[m]
        params = self.resolved_params()
        if m in (Method.SOAR, Method.HBF):
            q = 2.0
        elif m is Method.FAR:
            q = params["vartheta"]
        elif m is Method.ARK:
            q = params["kappa"] + 1.0
        else:
            q = 1.0
        return float((scale / op_norm_sq) ** (1.0 / q))


@dataclass
class StopConfig:
    kind: str = "discrepancy"
    varsigma: float = 1.0
    k_min: int = 1
    k_max: int = 5000


@dataclass
class SimulationConfig:
    n: int = 300
    p: int = 300
    cov_diag: float = 2.0
    cov_offdiag: float = 0.5
    cond_target: float | None = 1e4
    reshape: str = "minimal"
    beta_kind: str = "sparse20"
    error_dist: str = "normal"
    methods: list[MethodConfig] = field(
        default_factory=lambda: [MethodConfig(m.value) for m in ITERATIVE_METHODS]
    )
    baselines: list[str] = field(default_factory=lambda: ["ls", "sc", "ridge", "lasso"])
    stop: StopConfig = field(default_factory=StopConfig)
    threshold_step: float = THRESHOLD_STEP
    lasso_max_iter: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodConfig) else MethodConfig(**m) for m in self.methods]
        if isinstance(self.stop, dict):
            self.stop = StopConfig(**self.stop)
        if self.beta_kind not in ("sparse20", "uniform"):
            raise InputError(f"unknown beta_kind {self.beta_kind!r}")
        if self.beta_kind == "sparse20" and self.p < 20:
            raise InputError("sparse coefficients need p >= 20")
        if self.error_dist not in ("normal", "laplace"):
            raise InputError(f"unknown error distribution {self.error_dist!r}")
        if self.stop.kind not in ("discrepancy", "aosr"):
            raise InputError("stop.kind must be 'discrepancy' or 'aosr'")
        for b in self.baselines:
            if b not in ("ls", "sc", "ridge", "lasso"):
                raise InputError(f"unknown baseline {b!r}")
        for m in self.methods:
            Method(m.method)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SimulationConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> SimulationConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class SimulatedData:
    problem: RegressionProblem
    beta: np.ndarray
    errors: np.ndarray


def simulate_data(config: SimulationConfig, seed=None) -> SimulatedData:
    """Draw design, coefficients and errors from independent child streams of ``seed``."""
    seed = config.seed if seed is None else seed
    s_design, s_beta, s_err = np.random.SeedSequence(seed).spawn(3)
    X = gen_design(
        config.n, config.p, config.cov_diag, config.cov_offdiag, config.cond_target, s_design, config.reshape
    )
    if config.beta_kind == "sparse20":
        beta = gen_sparse_beta(config.p, s_beta)
    else:
        beta = gen_uniform_beta(config.p, seed=s_beta)
    e = gen_errors(config.n, config.error_dist, s_err)
    return SimulatedData(RegressionProblem(X, X @ beta + e), beta, e)


@dataclass
class MethodResult:
    method: str
    err_beta_hat: float | None = None
    err_beta_tilde: float | None = None
    err_theta_hat: float | None = None
    err_theta_tilde: float | None = None
    k0: int | None = None
    bn_hat: float | None = None
    bn_tilde: float | None = None
    bn_hat_mean: float | None = None
    bn_tilde_mean: float | None = None
    support_hat: bool | None = None
    support_tilde: bool | None = None
    tuning: float | None = None
    status: str = "ok"
    runtime: float = 0.0


def _score(name: str, truth, beta_hat, beta_tilde, step, k0=None, tuning=None) -> MethodResult:
    res = MethodResult(name, k0=k0, tuning=tuning)
    res.err_beta_hat = float(np.linalg.norm(beta_hat - truth))
    sw = threshold_sweep(beta_hat, truth, step=step)
    res.err_theta_hat, res.bn_hat, res.bn_hat_mean = sw.best_error, sw.best_b, sw.mean_b
    res.support_hat = support_recovered(beta_hat, truth, sw.best_b)
    if beta_tilde is not None:
        res.err_beta_tilde = float(np.linalg.norm(beta_tilde - truth))
        sw = threshold_sweep(beta_tilde, truth, step=step)
        res.err_theta_tilde, res.bn_tilde, res.bn_tilde_mean = sw.best_error, sw.best_b, sw.mean_b
        res.support_tilde = support_recovered(beta_tilde, truth, sw.best_b)
    return res


def fit_method(
    mc: MethodConfig, data: SimulatedData, stop: StopConfig, op_norm_sq: float
) -> Fit:
    """Fit one iterative method with the configured stopping rule."""
    dt = mc.step(op_norm_sq)
    if stop.kind == "discrepancy":
        rule = StoppingRule.discrepancy(float(np.linalg.norm(data.errors)), stop.varsigma, stop.k_max)
    else:
        rule = StoppingRule.adjusted_optimal(data.beta, stop.k_min, stop.k_max)
    return fit_iterative(data.problem, mc.method, dt, rule, **mc.resolved_params())


def oracle_ridge(data: SimulatedData, dec: SpectralDecomposition, grid=RIDGE_GRID) -> tuple[float, np.ndarray]:
    """Grid penalty (unscaled) minimizing ``||beta_hat - beta||``, ties to the smallest."""
    path = ridge_path(data.problem, grid, dec)
    errs = np.linalg.norm(path - data.beta[None, :], axis=1)
    i = int(np.argmin(errs))
    return float(grid[i]), path[i]


def ridge_spec(alpha_raw: float, n: int) -> FilterSpec:
    if alpha_raw == 0:
        return FilterSpec(Method.LS)
    return FilterSpec(Method.RIDGE, alpha=alpha_raw / n)


def _run_baseline(name: str, data: SimulatedData, dec: SpectralDecomposition, cfg: SimulationConfig) -> MethodResult:
    truth, n, step = data.beta, cfg.n, cfg.threshold_step
    Y = data.problem.Y
    if name == "ls":
        return _score("ls", truth, least_squares(data.problem, dec), None, step)
    if name == "sc":
        coeffs = (dec.U.T @ Y) / dec.singular_values
        partial = np.cumsum(dec.V * coeffs[None, :], axis=1)  # column k = estimate with k+1 modes
        errs = np.linalg.norm(partial - truth[:, None], axis=0)
        k_r = int(np.argmin(errs)) + 1
        est = partial[:, k_r - 1]
        # bias factor is 0 or 1, so the debiased estimator coincides with the plain one
        return _score("sc", truth, est, est.copy(), step, tuning=float(k_r))
    if name == "ridge":
        alpha_raw, _ = oracle_ridge(data, dec)
        spec = ridge_spec(alpha_raw, n)
        bh = estimate_spectral(dec, spec, Y)
        bt = estimate_debiased_spectral(dec, spec, Y)
        return _score("ridge", truth, bh, bt, step, tuning=alpha_raw)
    if name == "lasso":
        L = float(dec.singular_values[0] ** 2) / n
        best = (math.inf, None, None)
        warm = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for a in sorted(LASSO_GRID, reverse=True):
                fit = lasso(data.problem, a, max_iter=cfg.lasso_max_iter, beta0=warm, lipschitz=L)
                warm = fit.beta
                err = float(np.linalg.norm(fit.beta - truth))
                if err <= best[0]:
                    best = (err, a, fit.beta)
        return _score("lasso", truth, best[2], None, step, tuning=best[1])
    raise InputError(name)


@dataclass
class SimulationReport:
    config: dict
    seed: int
    results: list[MethodResult]
    beta_norm: float
    noise_norm: float

    def result(self, method: str) -> MethodResult:
        for r in self.results:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_dict(self, include_timing: bool = False) -> dict:
        rows = []
        for r in self.results:
            d = asdict(r)
            if not include_timing:
                d.pop("runtime")
            rows.append(d)
        return {
            "config": self.config,
            "seed": self.seed,
            "beta_norm": self.beta_norm,
            "noise_norm": self.noise_norm,
            "results": rows,
        }

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)

    def table_csv(self) -> str:
        """One row per method in the column order of the comparison tables."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [
            "method",
            "err_beta_hat",
            "k0",
            "err_beta_tilde",
            "err_theta_hat",
            "err_theta_tilde",
            "bn_hat",
            "bn_tilde",
            "tuning",
            "status",
        ]
        w.writerow(cols)
        for r in self.results:
            d = asdict(r)
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c]) for c in cols])
        return buf.getvalue()


def run_case(config: SimulationConfig, seed=None) -> SimulationReport:
    """Simulate one data set and evaluate every configured method and baseline.

    A diverging solver is recorded with ``status = "diverged"`` and the
    run continues.
    """
    seed = config.seed if seed is None else seed
    data = simulate_data(config, seed)
    dec = thin_svd(data.problem)
    op_sq = float(dec.singular_values[0] ** 2)
    results = []
    for mc in config.methods:
        t0 = time.perf_counter()
        try:
            fit = fit_method(mc, data, config.stop, op_sq)
            res = _score(mc.method, data.beta, fit.beta_hat, fit.beta_tilde, config.threshold_step, k0=fit.k0)
        except DivergenceError as exc:
            res = MethodResult(mc.method, status=f"diverged: {exc}")
        res.runtime = time.perf_counter() - t0
        results.append(res)
    for name in config.baselines:
        t0 = time.perf_counter()
        res = _run_baseline(name, data, dec, config)
        res.runtime = time.perf_counter() - t0
        results.append(res)
    return SimulationReport(
        config=config.to_dict(),
        seed=int(seed),
        results=results,
        beta_norm=float(np.linalg.norm(data.beta)),
        noise_norm=float(np.linalg.norm(data.errors)),
    )


def run_replicates(config: SimulationConfig, seeds, threads: int = 1) -> list[SimulationReport]:
    """:func:`run_case` for every seed; results are in seed order for any ``threads``."""
    seeds = list(seeds)
    if threads <= 1:
        return [run_case(config, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_case(config, s), seeds))


def full_case_one_config(method: str = "landweber") -> SimulationConfig:
    """The large-scale sparse experiment: n = p = 1000, step 5e-7, k_max 5000."""
    return SimulationConfig(
        n=1000,
        p=1000,
        methods=[MethodConfig(method, dt=5e-7)],
        baselines=[],
        stop=StopConfig("discrepancy", 1.0, 1, 5000),
    )
