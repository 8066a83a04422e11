"""Generator and bias functions for the spectral regression methods.

A method is described by its generator ``g_alpha(lam)``; the estimator is
``(1/n) g_alpha(X^T X / n) X^T Y`` and the bias factor on each spectral mode
is ``r_alpha(lam) = 1 - lam * g_alpha(lam)``.  All functions here accept a
scalar or an array of (scaled) eigenvalues ``lam > 0``.

Iteration-indexed methods store their iteration count or artificial time
through ``alpha``:

=============  ===============================
Landweber      k = floor(1 / alpha)
Showalter      t = 1 / alpha
SOAR           alpha = rho / t**2
HBF            t = 1 / alpha
FAR            alpha = t**(-vartheta)
AR^kappa       alpha = (kappa + 1) / t**(kappa + 1)
Nesterov       alpha = 1 / k**2
=============  ===============================
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import mpmath
import numpy as np
from scipy import integrate, special


class Method(str, Enum):
    LS = "ls"
    SC = "sc"
    RIDGE = "ridge"
    LANDWEBER = "landweber"
    SHOWALTER = "showalter"
    SOAR = "soar"
    HBF = "hbf"
    FAR = "far"
    ARK = "ark"
    NESTEROV = "nesterov"


# The nine regularizing methods; LS is the unregularized reference.
REGULARIZING_METHODS = tuple(m for m in Method if m is not Method.LS)


class ClosedFormUnavailable(ArithmeticError):
    """The generator has no usable closed form at the requested point."""


@dataclass(frozen=True)
class FilterSpec:
    """Method identifier plus hyperparameters.

    Only the fields relevant to ``method`` are read.  ``dt`` is the step size
    on the 1/n-scaled spectrum (Landweber and Nesterov closed forms).
    """

    method: Method
    alpha: float = 1.0
    dt: float = 1.0
    eta: float = 5.0
    kappa: float = 1.5
    s_star: float = 0.5
    omega: float = 5.0
    vartheta: float = 0.5
    rho: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method is not Method.LS and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.kappa > -1:
            raise ValueError("kappa must exceed -1")
        if not self.s_star > -0.5:
            raise ValueError("s_star must exceed -1/2")
        if not self.omega > -1:
            raise ValueError("omega must exceed -1")
        if not 0 < self.vartheta < 2:
            raise ValueError("vartheta must lie in (0, 2)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    def with_alpha(self, alpha: float) -> FilterSpec:
        return replace(self, alpha=float(alpha))

    @property
    def iterations(self) -> int:
        """Iteration count encoded in ``alpha`` (Landweber and Nesterov)."""
        if self.method is Method.LANDWEBER:
            return _floor_count(1.0 / self.alpha)
        if self.method is Method.NESTEROV:
            return max(1, _floor_count(1.0 / math.sqrt(self.alpha)))
        raise AttributeError(f"{self.method.value} is not iteration-indexed")

    def check_stability(self, lam_max: float) -> None:
        """Raise if ``dt`` violates the stated bound on a spectrum up to ``lam_max``."""
        if self.method is Method.LANDWEBER and self.dt * lam_max > 2.0 * (1 + 1e-12):
            raise ValueError("Landweber step size exceeds 2/||X||^2")
        if self.method is Method.NESTEROV and self.dt * lam_max > 1.0 * (1 + 1e-12):
            raise ValueError("Nesterov step size exceeds 1/||X||^2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


def _floor_count(x: float) -> int:
    # floor that forgives the rounding in 1/(1/k)
    return int(math.floor(x + 1e-9 * max(1.0, abs(x))))


def landweber_spec(k: int, dt: float) -> FilterSpec:
    return FilterSpec(Method.LANDWEBER, alpha=1.0 / k, dt=dt)


def nesterov_spec(k: int, dt: float, omega: float = 5.0) -> FilterSpec:
    return FilterSpec(Method.NESTEROV, alpha=1.0 / k**2, dt=dt, omega=omega)


# ---------------------------------------------------------------------------
# Special functions

ML_SERIES_LIMIT = 30.0


def _ml_float_series(x: float, a: float, b: float) -> float:
    if x == 0.0:
        return 1.0 / math.gamma(b)
    total = 0.0
    k = 0
    logx = math.log(x)
    while True:
        term = math.exp(k * logx - special.gammaln(a * k + b))
        term = -term if k % 2 else term
        total += term
        if k > 2 and abs(term) <= 1e-16 * max(abs(total), 1e-300):
            return total
        k += 1
        if k > 10_000:
            raise ClosedFormUnavailable("Mittag-Leffler series did not converge")


def _ml_mp_series(x: float, a: float, b: float) -> float:
    # Alternating series with terms up to exp(peak); carry enough digits to
    # absorb the cancellation.
    ks = np.arange(0, int(4 * x ** (1.0 / a)) + 60)
    logs = ks * math.log(x) - special.gammaln(a * ks + b)
    dps = int(max(logs.max(), 0.0) / math.log(10)) + 30
    with mpmath.workdps(dps):
        z = -mpmath.mpf(x)
        total = mpmath.mpf(0)
        k = 0
        tol = mpmath.mpf(10) ** -20
        while True:
            term = z**k / mpmath.gamma(a * k + b)
            total += term
            if k > x ** (1.0 / a) + 2 and abs(term) <= tol * abs(total):
                return float(total)
            k += 1


def _ml_integral(x: float, a: float) -> float:
    # E_a(-x) for 0 < a < 1 via the Laplace-type representation, after the
    # substitution u = r**a that removes the endpoint singularity.
    sa, ca = math.sin(a * math.pi), math.cos(a * math.pi)
    scale = x ** (1.0 / a)

    def f(u):
        return math.exp(-scale * u ** (1.0 / a)) / (u * u + 2.0 * u * ca + 1.0)

    upper = (50.0 / scale) ** a
    value, _ = integrate.quad(f, 0.0, upper, limit=400, epsabs=0.0, epsrel=1e-13)
    return sa / (a * math.pi) * value


def mittag_leffler(z: float, a: float, b: float = 1.0) -> float:
    """Two-parameter Mittag-Leffler function ``E_{a,b}(z)`` for real ``z <= 0``.

    Only ``b = 1`` and ``b = a + 1`` are supported for large arguments.
    Small ``|z|`` uses a double-precision series; for ``a >= 1`` and
    ``|z| <= 30`` an extended-precision series; for ``0 < a < 1`` an
    integral representation valid for all ``z <= 0``.
    """
    if z > 0:
        raise ValueError("only nonpositive arguments are supported")
    x = -float(z)
    if x <= 1.0:
        return _ml_float_series(x, a, b)
    if a == 1.0:
        if b == 1.0:
            return math.exp(-x)
        if b == 2.0:
            return -math.expm1(-x) / x
    if a < 1.0 and abs(b - 1.0) < 1e-15:
        return _ml_integral(x, a)
    if a < 1.0 and abs(b - (a + 1.0)) < 1e-15:
        return (1.0 - _ml_integral(x, a)) / x
    if x <= ML_SERIES_LIMIT:
        return _ml_mp_series(x, a, b)
    raise ClosedFormUnavailable(
        f"Mittag-Leffler E_({a},{b}) at {z} is outside the supported range; "
        "closed form unavailable, use the iterative solver"
    )


def gegenbauer_ratio(m: int, mu: float, x: np.ndarray) -> np.ndarray:
    """``C_m^{(mu)}(x) / C_m^{(mu)}(1)`` by the three-term recurrence.

    The normalisation is carried through the recurrence so neither the
    numerator nor ``C_m(1)`` is formed explicitly.
    """
    x = np.asarray(x, dtype=float)
    if m == 0:
        return np.ones_like(x)
    prev = np.ones_like(x)  # R_0
    cur = x.copy()  # R_1 = 2 mu x / (2 mu)
    q_prev = 1.0 / (2.0 * mu)  # c_0 / c_1
    for j in range(2, m + 1):
        # c_j = [2 (j + mu - 1) c_{j-1} - (j + 2 mu - 2) c_{j-2}] / j
        inv_q = (2.0 * (j + mu - 1.0) - (j + 2.0 * mu - 2.0) * q_prev) / j
        q = 1.0 / inv_q  # c_{j-1} / c_j
        nxt = (2.0 * x * (j + mu - 1.0) * cur * q - (j + 2.0 * mu - 2.0) * prev * q * q_prev) / j
        prev, cur, q_prev = cur, nxt, q
    return cur


def _soar_one_minus_r(x: np.ndarray, s: float) -> np.ndarray:
    # 1 - 2^s Gamma(s+1) J_s(x) / x^s, series for small x to avoid cancellation.
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 2.0
    if np.any(small):
        xs = x[small]
        h = (xs / 2.0) ** 2
        acc = np.zeros_like(xs)
        term = np.ones_like(xs)
        for m in range(1, 40):
            term = -term * h / (m * (m + s))
            acc -= term
        out[small] = acc
    big = ~small
    if np.any(big):
        xb = x[big]
        out[big] = 1.0 - np.exp(special.gammaln(s + 1.0) + s * math.log(2.0) - s * np.log(xb)) * special.jv(s, xb)
    return out


# ---------------------------------------------------------------------------
# HBF branches

def _hbf_branches(lam: np.ndarray, eta: float):
    disc = eta**2 - 4.0 * lam
    equal = np.abs(disc) < 1e-8 * eta**2
    over = (disc > 0) & ~equal
    under = (disc < 0) & ~equal
    return disc, over, under, equal


def _hbf_bias(lam: np.ndarray, t: float, eta: float) -> np.ndarray:
    disc, over, under, equal = _hbf_branches(lam, eta)
    r = np.empty_like(lam)
    if np.any(over):
        d = np.sqrt(disc[over])
        slow = 4.0 * lam[over] / (eta + d)  # eta - d without cancellation
        r[over] = (eta + d) / (2 * d) * np.exp(-slow * t / 2) - (eta - d) / (2 * d) * np.exp(-(eta + d) * t / 2)
    if np.any(under):
        w = np.sqrt(-disc[under])
        r[under] = np.exp(-eta * t / 2) * (eta / w * np.sin(w * t / 2) + np.cos(w * t / 2))
    if np.any(equal):
        r[equal] = np.exp(-eta * t / 2) * (eta * t / 2 + 1.0)
    return r


def _hbf_generator(lam: np.ndarray, t: float, eta: float) -> np.ndarray:
    disc, over, under, equal = _hbf_branches(lam, eta)
    one_minus_r = np.empty_like(lam)
    if np.any(over):
        d = np.sqrt(disc[over])
        slow = 4.0 * lam[over] / (eta + d)
        A = (eta + d) / (2 * d)
        B = (eta - d) / (2 * d)
        # 1 - A e^{-a t} + B e^{-b t} with A - B = 1
        one_minus_r[over] = -A * np.expm1(-slow * t / 2) + B * np.expm1(-(eta + d) * t / 2)
    if np.any(under):
        w = np.sqrt(-disc[under])
        one_minus_r[under] = 1.0 - np.exp(-eta * t / 2) * (eta / w * np.sin(w * t / 2) + np.cos(w * t / 2))
    if np.any(equal):
        one_minus_r[equal] = 1.0 - np.exp(-eta * t / 2) * (eta * t / 2 + 1.0)
    return one_minus_r / lam


# ---------------------------------------------------------------------------
# Public evaluations

def _as_lambda(lam) -> tuple[np.ndarray, bool]:
    arr = np.asarray(lam, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0):
        raise ValueError("lambda must be positive")
    return arr, scalar


def _unwrap(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def _nesterov_bias(spec: FilterSpec, lam: np.ndarray) -> np.ndarray:
    k = spec.iterations
    h = spec.dt * lam
    if np.any(h > 1.0 + 1e-12):
        raise ClosedFormUnavailable("Nesterov closed form needs dt * lambda <= 1")
    h = np.minimum(h, 1.0)
    base = 1.0 - h
    return base ** ((k + 1) / 2.0) * gegenbauer_ratio(k - 1, (spec.omega + 1.0) / 2.0, np.sqrt(base))


def generator_value(spec: FilterSpec, lam):
    """Generator ``g_alpha(lam)`` of ``spec`` at scaled eigenvalue(s) ``lam``."""
    lam, scalar = _as_lambda(lam)
    m, a = spec.method, spec.alpha
    if m is Method.LS:
        g = 1.0 / lam
    elif m is Method.SC:
        g = np.where(lam >= a, 1.0 / lam, 0.0)
    elif m is Method.RIDGE:
        g = 1.0 / (lam + a)
    elif m is Method.LANDWEBER:
        k = spec.iterations
        h = spec.dt * lam
        with np.errstate(invalid="ignore"):
            smooth = -np.expm1(k * np.log1p(-np.minimum(h, 0.5))) / lam
        g = np.where(h < 0.5, smooth, (1.0 - (1.0 - h) ** k) / lam)
    elif m in (Method.SHOWALTER, Method.ARK):
        g = -np.expm1(-lam / a) / lam
    elif m is Method.SOAR:
        g = _soar_one_minus_r(np.sqrt(spec.rho * lam / a), spec.s_star) / lam
    elif m is Method.HBF:
        g = _hbf_generator(lam, 1.0 / a, spec.eta)
    elif m is Method.FAR:
        th = spec.vartheta
        g = np.array([mittag_leffler(-v / a, th, th + 1.0) / a for v in lam])
    elif m is Method.NESTEROV:
        g = (1.0 - _nesterov_bias(spec, lam)) / lam
    else:  # pragma: no cover
        raise ValueError(m)
    return _unwrap(np.asarray(g, dtype=float), scalar)


def bias_value(spec: FilterSpec, lam):
    """Bias factor ``r_alpha(lam) = 1 - lam g_alpha(lam)``.

    HBF, SOAR, Nesterov and FAR use their own closed forms rather than the
    defining identity.
    """
    lam, scalar = _as_lambda(lam)
    m, a = spec.method, spec.alpha
    if m is Method.LS:
        r = np.zeros_like(lam)
    elif m is Method.SC:
        r = np.where(lam >= a, 0.0, 1.0)
    elif m is Method.RIDGE:
        r = a / (lam + a)
    elif m is Method.LANDWEBER:
        r = (1.0 - spec.dt * lam) ** spec.iterations
    elif m in (Method.SHOWALTER, Method.ARK):
        r = np.exp(-lam / a)
    elif m is Method.SOAR:
        s = spec.s_star
        x = np.sqrt(spec.rho * lam / a)
        r = np.exp(special.gammaln(s + 1.0) + s * math.log(2.0) - s * np.log(x)) * special.jv(s, x)
    elif m is Method.HBF:
        r = _hbf_bias(lam, 1.0 / a, spec.eta)
    elif m is Method.FAR:
        r = np.array([mittag_leffler(-v / a, spec.vartheta, 1.0) for v in lam])
    elif m is Method.NESTEROV:
        r = _nesterov_bias(spec, lam)
    else:  # pragma: no cover
        raise ValueError(m)
    return _unwrap(np.asarray(r, dtype=float), scalar)


def debiased_generator_value(spec: FilterSpec, lam):
    """``(1 + r_alpha(lam)) g_alpha(lam)``, the generator of the debiased estimator."""
    g = generator_value(spec, lam)
    r = bias_value(spec, lam)
    return (1.0 + r) * g


# ---------------------------------------------------------------------------
# Numerical checks of the generator conditions

DEFAULT_LAMBDA_GRID = np.logspace(-6, 1, 50)
DEFAULT_ALPHA_GRID = np.logspace(-6, 0, 50)


@dataclass
class ConditionReport:
    method: str
    d11_max_residual_bias: float
    d12_cr: float
    d13_c0: float
    d13_two_over_lambda: float
    passed_d11: bool
    passed_d12: bool
    passed_d13: bool
    qualification_ratio: float | None = None

    @property
    def passed(self) -> bool:
        return self.passed_d11 and self.passed_d12 and self.passed_d13

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _grid_values(spec, lambda_grid, alpha_grid, fn):
    return np.array([fn(spec.with_alpha(a), lambda_grid) for a in alpha_grid])


def verify_generator_conditions(
    spec: FilterSpec,
    lambda_grid=None,
    alpha_grid=None,
    c_r_bound: float = 1.0,
    c0_bound: float = 1.0,
    decay_tol: float = 1e-2,
    decay_lambda: float = 1e-1,
) -> ConditionReport:
    """Evaluate the three generator conditions on a (alpha, lambda) grid.

    * bias decay: ``|r|`` at the smallest grid ``alpha`` is at most
      ``decay_tol`` for every grid ``lambda >= decay_lambda``;
    * bounded bias: ``sup |r| <= c_r_bound``;
    * generator bound: ``g <= min(2/lambda, c0_bound / sqrt(lambda alpha))``.

    Failures are reported, never raised.
    """
    lam = np.sort(np.asarray(DEFAULT_LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float))
    alphas = np.sort(np.asarray(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid, dtype=float))
    if lam.size == 0 or alphas.size == 0:
        raise ValueError("grids must be nonempty")
    G = _grid_values(spec, lam, alphas, generator_value)
    R = _grid_values(spec, lam, alphas, bias_value)
    decay_mask = lam >= decay_lambda
    if not decay_mask.any():
        decay_mask[-1] = True
    d11 = float(np.max(np.abs(R[0, decay_mask])))
    d12 = float(np.max(np.abs(R)))
    sqrt_la = np.sqrt(lam[None, :] * alphas[:, None])
    d13_c0 = float(np.max(G * sqrt_la))
    d13_two = float(np.max(G * lam[None, :] / 2.0))
    rel = 1e-12
    bound = np.minimum(2.0 / lam[None, :], c0_bound / sqrt_la)
    return ConditionReport(
        method=spec.method.value,
        d11_max_residual_bias=d11,
        d12_cr=d12,
        d13_c0=d13_c0,
        d13_two_over_lambda=d13_two,
        passed_d11=d11 <= decay_tol,
        passed_d12=d12 <= c_r_bound * (1 + rel),
        passed_d13=bool(np.all(G <= bound * (1 + rel))),
    )


def verify_qualification(spec: FilterSpec, d: float, lambda_grid=None, alpha_grid=None) -> float:
    """``max_alpha sup_lambda |r_alpha(lambda)| lambda^d / alpha^d`` on the grid."""
    if not d > 0:
        raise ValueError("d must be positive")
    lam = np.asarray(DEFAULT_LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float)
    alphas = np.asarray(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid, dtype=float)
    R = _grid_values(spec, lam, alphas, bias_value)
    ratio = np.abs(R) * lam[None, :] ** d / alphas[:, None] ** d
    return float(np.max(ratio))
