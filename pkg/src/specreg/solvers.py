"""Iterative regularization schemes driven by matrix-vector products.

Every scheme starts from ``beta_0 = 0`` (and zero velocity for the
second-order flows) and works with the unscaled normal operator
``X^T X``; :func:`equivalent_filter` maps an iterate back to the
:class:`~specreg.filters.FilterSpec` on the 1/n-scaled spectrum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import gamma

from .filters import FilterSpec, Method
from .spectral import RegressionProblem

DIVERGENCE_FACTOR = 1e12
FAR_HISTORY_CAP = 5000


class DivergenceError(ArithmeticError):
    """Residual blew up; the step size is too large for the scheme."""


class ContractViolation(RuntimeError):
    pass


@dataclass
class IterationState:
    beta: np.ndarray
    velocity: np.ndarray | None = None
    aux: np.ndarray | None = None
    k: int = 0
    t: float = 0.0
    residual_norm: float = math.nan
    history: list[float] = field(default_factory=list)
    error_history: list[float] | None = None


@dataclass(frozen=True)
class StoppingRule:
    """When to stop an iteration.

    ``discrepancy``: first ``k`` with ``||Y - X beta_k|| <= varsigma * noise_norm``,
    capped at ``k_max``.  ``aosr``: first local minimum of ``||beta - beta_k||``
    clamped to ``[k_min, k_max]`` (needs ``truth``).  ``fixed``: exactly
    ``k_max`` steps.
    """

    kind: str = "fixed"
    varsigma: float = 1.0
    noise_norm: float | None = None
    k_min: int = 1
    k_max: int = 5000
    truth: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("discrepancy", "aosr", "fixed"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if not 0 <= self.k_min <= self.k_max:
            raise ValueError("need 0 <= k_min <= k_max")
        if self.kind == "discrepancy" and (self.noise_norm is None or not self.varsigma > 0):
            raise ValueError("discrepancy principle needs noise_norm and varsigma > 0")
        if self.kind == "aosr" and self.truth is None:
            raise ValueError("adjusted optimal stopping needs the true coefficients")

    @classmethod
    def fixed(cls, k: int) -> StoppingRule:
        return cls("fixed", k_min=0, k_max=int(k))

    @classmethod
    def discrepancy(cls, noise_norm: float, varsigma: float = 1.0, k_max: int = 5000) -> StoppingRule:
        return cls("discrepancy", varsigma=varsigma, noise_norm=float(noise_norm), k_max=int(k_max))

    @classmethod
    def adjusted_optimal(cls, truth, k_min: int = 1, k_max: int = 5000) -> StoppingRule:
        return cls("aosr", truth=np.asarray(truth, dtype=float), k_min=int(k_min), k_max=int(k_max))


# ---------------------------------------------------------------------------
# Stopping indices from recorded histories (1-based step numbers)

def stop_discrepancy(residual_history, bound: float, k_max: int) -> int:
    """Smallest step whose residual is ``<= bound``, clamped to ``k_max``.

    ``residual_history[i]`` is the residual after step ``i + 1``.
    """
    hist = np.asarray(residual_history, dtype=float)
    hits = np.flatnonzero(hist <= bound)
    k_star = int(hits[0]) + 1 if hits.size else math.inf
    return int(min(k_max, k_star))


def first_local_min(error_history) -> int | None:
    """1-based index of the first local minimizer, or None if there is none."""
    err = np.asarray(error_history, dtype=float)
    best = math.inf
    for j in range(err.size - 1):
        if err[j] < best and err[j] <= err[j + 1]:
            return j + 1
        best = min(best, err[j])
    return None


def stop_adjusted_optimal(error_history, k_min: int, k_max: int) -> int:
    k_star = first_local_min(error_history)
    if k_star is None:
        return int(k_max)
    return int(min(k_max, max(k_star, k_min)))


# ---------------------------------------------------------------------------
# Schemes

class _Scheme:
    """One-step map on the iterate; subclasses implement :meth:`advance`."""

    def __init__(self, X: np.ndarray, Y: np.ndarray, dt: float):
        self.X = X
        self.Y = Y
        self.dt = float(dt)
        self.XtY = X.T @ Y
        self.k = 0
        self.beta = np.zeros(X.shape[1])

    def normal(self, v: np.ndarray) -> np.ndarray:
        return self.X.T @ (self.X @ v)

    def grad(self, v: np.ndarray) -> np.ndarray:
        return self.XtY - self.normal(v)

    def advance(self) -> None:
        raise NotImplementedError

    def snapshot(self) -> dict:
        return {"beta": self.beta.copy()}

    def state(self, snap: dict | None = None) -> IterationState:
        snap = snap or self.snapshot()
        return IterationState(beta=snap["beta"], velocity=snap.get("velocity"), aux=snap.get("aux"))


class _Landweber(_Scheme):
    def advance(self):
        self.beta = self.beta + self.dt * self.grad(self.beta)
        self.k += 1


class _ShowalterRK4(_Scheme):
    def advance(self):
        dt, b = self.dt, self.beta
        k1 = self.grad(b)
        k2 = self.grad(b + dt / 2 * k1)
        k3 = self.grad(b + dt / 2 * k2)
        k4 = self.grad(b + dt * k3)
        self.beta = b + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        self.k += 1


class _SoarVerlet(_Scheme):
    """Stormer-Verlet for the vanishing-damping flow.

    The damping coefficient ``(1 + 2 s) / t_k`` is singular at ``t_0``; the
    first step uses ``t_1 = dt`` instead.  The implicit half-step damps at
    ``t_k``, the explicit one at ``t_{k+1}``.  With ``lookahead=True`` the second
    half-step evaluates the gradient at the extrapolated point
    ``q_{k+1} = beta_{k+1} + 2 dt a_{k+1} z_{k+1/2}``; the default evaluates it
    at ``beta_{k+1}``.
    """

    def __init__(self, X, Y, dt, s_star, lookahead=False):
        super().__init__(X, Y, dt)
        self.c = 1.0 + 2.0 * s_star
        self.z = np.zeros_like(self.beta)
        self.q = np.zeros_like(self.beta)
        self.lookahead = lookahead

    def advance(self):
        dt, c, k = self.dt, self.c, self.k
        t_k = max(k, 1) * dt
        damp = dt / 2 * c / t_k
        z_half = (self.z + dt / 2 * self.grad(self.beta)) / (1.0 + damp)
        self.beta = self.beta + dt * z_half
        if self.lookahead:
            t1, t2 = (k + 1) * dt, (k + 2) * dt
            a = (1.0 - dt * c / (2 * t1)) / (1.0 + dt * c / (2 * t2))
            self.q = self.beta + 2.0 * dt * a * z_half
        else:
            self.q = self.beta
        damp_next = dt / 2 * c / ((k + 1) * dt)
        self.z = z_half - damp_next * z_half + dt / 2 * self.grad(self.q)
        self.k += 1

    def snapshot(self):
        return {"beta": self.beta.copy(), "velocity": self.z.copy(), "aux": self.q.copy()}


class _HeavyBallRK4(_Scheme):
    def __init__(self, X, Y, dt, eta):
        super().__init__(X, Y, dt)
        self.eta = float(eta)
        self.v = np.zeros_like(self.beta)

    def _rhs(self, b, v):
        return v, self.grad(b) - self.eta * v

    def advance(self):
        dt, b, v = self.dt, self.beta, self.v
        k1b, k1v = self._rhs(b, v)
        k2b, k2v = self._rhs(b + dt / 2 * k1b, v + dt / 2 * k1v)
        k3b, k3v = self._rhs(b + dt / 2 * k2b, v + dt / 2 * k2v)
        k4b, k4v = self._rhs(b + dt * k3b, v + dt * k3v)
        self.beta = b + dt / 6 * (k1b + 2 * k2b + 2 * k3b + k4b)
        self.v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        self.k += 1

    def snapshot(self):
        return {"beta": self.beta.copy(), "velocity": self.v.copy()}


class _FractionalABM(_Scheme):
    """Predictor-corrector (fractional Adams-Bashforth-Moulton) scheme.

    Keeps the full history of right-hand sides: O(k) memory, O(k^2) time.
    """

    def __init__(self, X, Y, dt, vartheta, capacity):
        super().__init__(X, Y, dt)
        self.th = float(vartheta)
        self.F = np.empty((capacity + 1, X.shape[1]))
        self.F[0] = self.grad(self.beta)
        self.gamma_th = gamma(self.th)

    def advance(self):
        th, dt, k = self.th, self.dt, self.k
        if k + 1 >= self.F.shape[0]:
            raise ContractViolation("FAR history capacity exhausted")
        j = np.arange(k + 1, dtype=float)
        b_w = dt**th / th * ((k + 1 - j) ** th - (k - j) ** th)
        F = self.F[: k + 1]
        predictor = (b_w @ F) / self.gamma_th
        d = np.empty(k + 1)
        d[0] = k ** (th + 1) - (k - th) * (k + 1) ** th
        if k >= 1:
            jj = j[1:]
            d[1:] = (k - jj + 2) ** (th + 1) + (k - jj) ** (th + 1) - 2 * (k - jj + 1) ** (th + 1)
        scale = dt**th / (th * (th + 1))
        corrector = scale * (self.grad(predictor) + d @ F) / self.gamma_th
        self.beta = corrector
        self.k += 1
        self.F[self.k] = self.grad(self.beta)


class _AccelSymplecticEuler(_Scheme):
    """Semi-implicit symplectic Euler for the order-kappa acceleration flow.

    The flow ``t b'' + (t^-k - k) b' + t^(k+1) G b' + G b = X^T Y`` is
    divided through by ``t`` before discretizing, so the z-update solves

        (I (1 + dt (t^-k - k) / t) + dt t^k G) z_{k+1} = z_k + (dt / t) X^T (Y - X b_{k+1})

    by conjugate gradients.  ``literal=True`` uses the undivided coefficients
    ``dt t^-k G`` and ``dt X^T (Y - X b_{k+1})`` instead; that variant does not
    converge to the closed-form filter.
    """

    def __init__(self, X, Y, dt, kappa, cg_tol=1e-10, literal=False):
        super().__init__(X, Y, dt)
        self.kappa = float(kappa)
        self.z = np.zeros_like(self.beta)
        self.cg_tol = cg_tol
        self.literal = literal

    def advance(self):
        dt, kap, k = self.dt, self.kappa, self.k
        t_k = max(k, 1) * dt
        a = 1.0 + dt * (t_k ** (-kap) - kap) / t_k
        if self.literal:
            b, force = dt * t_k ** (-kap), dt
        else:
            b, force = dt * t_k**kap, dt / t_k
        if a <= 0:
            raise ContractViolation("implicit operator is not positive definite")
        self.beta = self.beta + dt * self.z
        rhs = self.z + force * self.grad(self.beta)
        p = self.beta.shape[0]
        op = LinearOperator((p, p), matvec=lambda v: a * v + b * self.normal(v), dtype=float)
        z, info = cg(op, rhs, x0=self.z, rtol=self.cg_tol, atol=0.0, maxiter=10 * p)
        if info < 0:
            raise ContractViolation("conjugate gradients broke down")
        self.z = z
        self.k += 1

    def snapshot(self):
        return {"beta": self.beta.copy(), "velocity": self.z.copy()}


class _Nesterov(_Scheme):
    def __init__(self, X, Y, dt, omega, unit_start=False):
        super().__init__(X, Y, dt)
        self.omega = float(omega)
        self.prev = np.zeros_like(self.beta)
        self.unit_start = unit_start

    def advance(self):
        k = self.k
        if k == 0:
            nxt = self.XtY.copy() if self.unit_start else self.dt * self.XtY
        else:
            z = self.beta + (k - 1) / (k + self.omega) * (self.beta - self.prev)
            nxt = z + self.dt * self.grad(z)
        self.prev, self.beta = self.beta, nxt
        self.k += 1

    def snapshot(self):
        return {"beta": self.beta.copy(), "velocity": self.prev.copy()}


# ---------------------------------------------------------------------------
# Driver

def _drive(scheme: _Scheme, problem: RegressionProblem, stop: StoppingRule) -> tuple[IterationState, int]:
    X, Y = problem.X, problem.Y
    r0 = float(np.linalg.norm(Y))
    limit = DIVERGENCE_FACTOR * max(r0, np.finfo(float).tiny)
    history: list[float] = []
    errors: list[float] | None = [] if stop.kind == "aosr" else None
    bound = stop.varsigma * stop.noise_norm if stop.kind == "discrepancy" else None
    target = stop.k_max
    found = False
    best_err = math.inf
    snap_prev = None

    if stop.k_max == 0:
        st = scheme.state()
        st.residual_norm = r0
        st.history = history
        st.error_history = errors
        return st, 0

    while scheme.k < target:
        snap_prev = scheme.snapshot() if stop.kind == "aosr" else None
        scheme.advance()
        res = float(np.linalg.norm(Y - X @ scheme.beta))
        if not np.isfinite(res) or res > limit:
            raise DivergenceError(f"residual diverged at step {scheme.k}: step size too large")
        history.append(res)
        k = scheme.k
        if stop.kind == "discrepancy" and res <= bound:
            target = k
            break
        if stop.kind == "aosr":
            err = float(np.linalg.norm(stop.truth - scheme.beta))
            errors.append(err)
            if not found and k >= 2:
                e_prev = errors[k - 2]  # error at candidate k* = k - 1
                if e_prev < best_err and e_prev <= err:
                    found = True
                    target = min(stop.k_max, max(k - 1, stop.k_min))
                    if target == k - 1:
                        st = scheme.state(snap_prev)
                        st.k, st.t = target, target * scheme.dt
                        st.residual_norm = history[target - 1]
                        st.history, st.error_history = history, errors
                        return st, target
                best_err = min(best_err, e_prev)

    st = scheme.state()
    st.k, st.t = scheme.k, scheme.k * scheme.dt
    st.residual_norm = history[-1]
    st.history, st.error_history = history, errors
    return st, scheme.k


def landweber_run(problem: RegressionProblem, dt: float, stop: StoppingRule):
    """``beta_{k+1} = beta_k + dt X^T (Y - X beta_k)``."""
    return _drive(_Landweber(problem.X, problem.Y, dt), problem, stop)


def showalter_rk4_run(problem: RegressionProblem, dt: float, stop: StoppingRule):
    """Classical RK4 on ``beta' = X^T Y - X^T X beta``."""
    return _drive(_ShowalterRK4(problem.X, problem.Y, dt), problem, stop)


def soar_sv_run(problem: RegressionProblem, dt: float, s_star: float, stop: StoppingRule, lookahead: bool = False):
    if not s_star > -0.5:
        raise ValueError("s_star must exceed -1/2")
    return _drive(_SoarVerlet(problem.X, problem.Y, dt, s_star, lookahead), problem, stop)


def hbf_rk4_run(problem: RegressionProblem, dt: float, eta: float, stop: StoppingRule):
    if not eta > 0:
        raise ValueError("eta must be positive")
    return _drive(_HeavyBallRK4(problem.X, problem.Y, dt, eta), problem, stop)


def far_adams_moulton_run(
    problem: RegressionProblem, dt: float, vartheta: float, stop: StoppingRule, history_cap: int = FAR_HISTORY_CAP
):
    """Fractional flow via the one-step Adams-Moulton predictor-corrector.

    Cost grows as O(k^2); ``stop.k_max`` may not exceed ``history_cap``.
    """
    if not 0 < vartheta < 2:
        raise ValueError("vartheta must lie in (0, 2)")
    if stop.k_max > history_cap:
        raise ValueError(f"FAR k_max {stop.k_max} exceeds the history cap {history_cap}")
    return _drive(_FractionalABM(problem.X, problem.Y, dt, vartheta, stop.k_max), problem, stop)


def ark_symplectic_run(problem: RegressionProblem, dt: float, kappa: float, stop: StoppingRule, literal: bool = False):
    if not kappa > -1:
        raise ValueError("kappa must exceed -1")
    if kappa < 0:
        warnings.warn(
            "for kappa < 0 the closed-form filter has unbounded initial velocity; "
            "the zero-velocity iteration follows a different trajectory",
            RuntimeWarning,
            stacklevel=2,
        )
    return _drive(_AccelSymplecticEuler(problem.X, problem.Y, dt, kappa, literal=literal), problem, stop)


def nesterov_run(problem: RegressionProblem, dt: float, omega: float, stop: StoppingRule, unit_start: bool = False):
    """Nesterov acceleration with momentum ``(k - 1) / (k + omega)``.

    The first step is the Landweber step ``beta_1 = dt X^T Y``;
    ``unit_start=True`` uses ``beta_1 = X^T Y`` regardless of ``dt``.
    """
    if not omega > -1:
        raise ValueError("omega must exceed -1")
    return _drive(_Nesterov(problem.X, problem.Y, dt, omega, unit_start), problem, stop)


ITERATIVE_METHODS = (
    Method.LANDWEBER,
    Method.SHOWALTER,
    Method.SOAR,
    Method.HBF,
    Method.FAR,
    Method.ARK,
    Method.NESTEROV,
)


def run_method(method, problem: RegressionProblem, dt: float, stop: StoppingRule, **params):
    """Dispatch to the solver for ``method``; extra keywords are method parameters."""
    method = Method(method)
    if method is Method.LANDWEBER:
        return landweber_run(problem, dt, stop)
    if method is Method.SHOWALTER:
        return showalter_rk4_run(problem, dt, stop)
    if method is Method.SOAR:
        return soar_sv_run(problem, dt, params.get("s_star", 0.5), stop, params.get("lookahead", False))
    if method is Method.HBF:
        return hbf_rk4_run(problem, dt, params.get("eta", 5.0), stop)
    if method is Method.FAR:
        return far_adams_moulton_run(problem, dt, params.get("vartheta", 0.5), stop)
    if method is Method.ARK:
        return ark_symplectic_run(problem, dt, params.get("kappa", 1.5), stop, params.get("literal", False))
    if method is Method.NESTEROV:
        return nesterov_run(problem, dt, params.get("omega", 5.0), stop, params.get("unit_start", False))
    raise ValueError(f"{method.value} has no iterative solver")


def equivalent_filter(method, k: int, dt: float, n: int, **params) -> FilterSpec:
    """FilterSpec on the 1/n-scaled spectrum matching ``k`` raw steps of size ``dt``."""
    method = Method(method)
    if k < 1:
        raise ValueError("need at least one step")
    t = k * dt
    if method is Method.LANDWEBER:
        return FilterSpec(method, alpha=1.0 / k, dt=n * dt)
    if method is Method.NESTEROV:
        return FilterSpec(method, alpha=1.0 / k**2, dt=n * dt, omega=params.get("omega", 5.0))
    if method is Method.SHOWALTER:
        return FilterSpec(method, alpha=1.0 / (n * t))
    if method is Method.SOAR:
        rho = params.get("rho", 1.0)
        return FilterSpec(method, alpha=rho / (n * t * t), s_star=params.get("s_star", 0.5), rho=rho)
    if method is Method.HBF:
        return FilterSpec(method, alpha=1.0 / (math.sqrt(n) * t), eta=params.get("eta", 5.0) / math.sqrt(n))
    if method is Method.FAR:
        th = params.get("vartheta", 0.5)
        return FilterSpec(method, alpha=1.0 / (n * t**th), vartheta=th)
    if method is Method.ARK:
        kap = params.get("kappa", 1.5)
        return FilterSpec(method, alpha=(kap + 1.0) / (n * t ** (kap + 1.0)), kappa=kap)
    raise ValueError(f"{method.value} is not iterative")


def debias_two_pass(
    problem: RegressionProblem,
    method,
    dt: float,
    k0: int,
    beta_first: np.ndarray | None = None,
    **params,
) -> np.ndarray:
    """``2 beta_k(X, Y) - beta_k(X, X beta_k(X, Y))`` with the same solver and ``k``."""
    if beta_first is None:
        first, k_first = run_method(method, problem, dt, StoppingRule.fixed(k0), **params)
        beta_first = first.beta
        if k_first != k0:
            raise ContractViolation("first pass did not reach k0")
    second_problem = RegressionProblem(problem.X, problem.X @ beta_first)
    second, k_second = run_method(method, second_problem, dt, StoppingRule.fixed(k0), **params)
    if k_second != k0:
        raise ContractViolation(f"second pass ran {k_second} steps, first pass {k0}")
    return 2.0 * beta_first - second.beta


def trajectory_csv_rows(state: IterationState) -> list[tuple[int, float]]:
    return [(k + 1, r) for k, r in enumerate(state.history)]


Runner = Callable[..., tuple[IterationState, int]]
