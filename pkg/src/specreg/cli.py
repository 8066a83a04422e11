"""Command-line front end.

Exit status: 0 success, 2 bad arguments, 3 unreadable or malformed input,
4 numerical failure.  Errors are reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .estimators import fit_closed_form, fit_iterative, make_bundle
from .filters import REGULARIZING_METHODS, ClosedFormUnavailable, FilterSpec, Method, verify_generator_conditions
from .inference import wild_bootstrap
from .simulation import SimulationConfig, run_replicates, threshold_sweep
from .solvers import ContractViolation, DivergenceError, StoppingRule
from .spectral import InputError, RegressionProblem, read_csv_matrix, read_csv_vector, write_csv

EXIT_ARGS, EXIT_INPUT, EXIT_NUMERIC = 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


class _Parser(argparse.ArgumentParser):
    """Report usage errors through the JSON error channel instead of exiting."""

    def error(self, message):
        raise CliError(EXIT_ARGS, "bad-arguments", message)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_problem(args) -> RegressionProblem:
    for path in (args.X, args.Y):
        if not Path(path).is_file():
            raise InputError(f"no such file: {path}")
    X = read_csv_matrix(args.X)
    Y = read_csv_vector(args.Y)
    return RegressionProblem(X, Y)


def _method_params(args) -> dict:
    return {
        "eta": args.eta,
        "kappa": args.kappa,
        "s_star": args.s_star,
        "omega": args.omega,
        "vartheta": args.vartheta,
    }


def _spec(args) -> FilterSpec:
    return FilterSpec(
        Method(args.method),
        alpha=args.alpha,
        dt=args.dt if args.dt is not None else 1.0,
        rho=args.rho,
        **_method_params(args),
    )


def _fit(args, problem: RegressionProblem):
    method = Method(args.method)
    if args.stop is None:
        return fit_closed_form(problem, _spec(args))
    if args.dt is None:
        raise CliError(EXIT_ARGS, "bad-arguments", "--stop requires --dt")
    if args.stop == "discrepancy":
        if args.noise_norm is None:
            raise CliError(EXIT_ARGS, "bad-arguments", "discrepancy stopping requires --noise-norm")
        rule = StoppingRule.discrepancy(args.noise_norm, args.varsigma, args.k_max)
    elif args.stop == "aosr":
        if args.truth is None:
            raise CliError(EXIT_ARGS, "bad-arguments", "aosr stopping requires --truth")
        rule = StoppingRule.adjusted_optimal(read_csv_vector(args.truth), args.k_min, args.k_max)
    else:
        if args.k is None:
            raise CliError(EXIT_ARGS, "bad-arguments", "fixed stopping requires --k")
        rule = StoppingRule.fixed(args.k)
    params = _method_params(args)
    if method is Method.SOAR:
        params["rho"] = args.rho
    return fit_iterative(problem, method, args.dt, rule, **params)


def cmd_fit(args) -> None:
    problem = _load_problem(args)
    fit = _fit(args, problem)
    bundle = make_bundle(problem, fit, args.bn)
    _emit(_dump(bundle.to_dict()), args.out)


def cmd_bootstrap(args) -> None:
    problem = _load_problem(args)
    fit = _fit(args, problem)
    rep = wild_bootstrap(
        problem,
        fit.spec,
        args.bn,
        args.alpha_star,
        args.B,
        args.seed,
        beta_hat=fit.beta_hat,
        beta_tilde=fit.beta_tilde,
        threads=args.threads,
    )
    _emit(_dump(rep.to_dict()), args.out)


def cmd_simulate(args) -> None:
    cfg = SimulationConfig.from_json(args.config)
    seeds = [args.seed + i for i in range(args.replicates)]
    reports = run_replicates(cfg, seeds, threads=args.threads)
    _emit(_dump([r.to_dict() for r in reports]), args.out)
    if args.table:
        Path(args.table).write_text("".join(r.table_csv() for r in reports))


def cmd_sweep(args) -> None:
    for path in (args.estimate, args.truth):
        if not Path(path).is_file():
            raise InputError(f"no such file: {path}")
    est = read_csv_vector(args.estimate)
    truth = read_csv_vector(args.truth)
    sw = threshold_sweep(est, truth, step=args.step)
    _emit(
        _dump(
            {
                "best_b": sw.best_b,
                "best_error": sw.best_error,
                "mean_b": sw.mean_b,
                "plateau": list(sw.plateau),
            }
        ),
        args.out,
    )
    if args.curve:
        write_csv(args.curve, np.column_stack([sw.grid, sw.curve]))


def cmd_verify(args) -> None:
    methods = [Method(m) for m in args.method] if args.method else list(REGULARIZING_METHODS)
    reports = []
    for m in methods:
        dt = args.dt if args.dt is not None else (0.1 if m in (Method.LANDWEBER, Method.NESTEROV) else 1.0)
        spec = FilterSpec(m, dt=dt)
        reports.append(verify_generator_conditions(spec, c_r_bound=args.c_r, c0_bound=args.c0).to_dict())
    _emit(_dump(reports), args.out)
    if not all(r["passed"] for r in reports):
        raise CliError(1, "conditions-failed", "at least one method failed the generator conditions")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("X", help="design matrix CSV (headerless)")
    p.add_argument("Y", help="response vector CSV")
    p.add_argument("--method", required=True, choices=[m.value for m in Method])
    p.add_argument("--alpha", type=float, default=1.0, help="regularization parameter (closed-form fits)")
    p.add_argument("--dt", type=float, default=None, help="step size")
    p.add_argument("--stop", choices=["discrepancy", "aosr", "fixed"], default=None,
                   help="run the iterative solver with this stopping rule")
    p.add_argument("--varsigma", type=float, default=1.0)
    p.add_argument("--noise-norm", type=float, default=None)
    p.add_argument("--truth", default=None, help="true coefficients CSV (aosr)")
    p.add_argument("--k", type=int, default=None, help="step count for fixed stopping")
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=5000)
    p.add_argument("--eta", type=float, default=5.0)
    p.add_argument("--kappa", type=float, default=1.5)
    p.add_argument("--s-star", type=float, default=0.5)
    p.add_argument("--omega", type=float, default=5.0)
    p.add_argument("--vartheta", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--bn", type=float, default=0.0, help="threshold b_n")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specreg", description="Spectral-filter regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one method and write an estimate bundle")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="wild bootstrap confidence regions")
    _add_fit_flags(p)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--alpha-star", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", help="run a simulation config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--table", default=None, help="also write the comparison table CSV here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="threshold sweep of an estimate against the truth")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("--step", type=float, default=5e-4)
    p.add_argument("--curve", default=None, help="write (b, error) CSV here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-filters", help="check the generator conditions numerically")
    p.add_argument("--method", action="append", choices=[m.value for m in Method])
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--c-r", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(str(message).split())}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise CliError(EXIT_ARGS, "bad-arguments", "--threads must be at least 1")
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except InputError as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except (DivergenceError, ClosedFormUnavailable, ContractViolation, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_ARGS, "bad-arguments", str(exc))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
