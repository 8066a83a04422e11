"""Spectral-filter regression: regularized, debiased and thresholded estimators
with iterative solvers, wild-bootstrap inference and a simulation harness."""

from __future__ import annotations

from .estimators import (
    EstimateBundle,
    Fit,
    TauVector,
    baseline_estimate,
    debias,
    estimate_debiased_spectral,
    estimate_spectral,
    fit_closed_form,
    fit_iterative,
    lasso,
    make_bundle,
    residual_variance,
    tau_debiased,
    tau_plain,
    threshold,
)
from .filters import (
    REGULARIZING_METHODS,
    ClosedFormUnavailable,
    ConditionReport,
    FilterSpec,
    Method,
    bias_value,
    debiased_generator_value,
    generator_value,
    mittag_leffler,
    verify_generator_conditions,
    verify_qualification,
)
from .inference import (
    BootstrapReport,
    CoverageConfig,
    coverage_experiment,
    gaussian_reference_cdf,
    max_statistic,
    wild_bootstrap,
)
from .simulation import (
    MethodConfig,
    SimulationConfig,
    SimulationReport,
    StopConfig,
    gen_design,
    gen_errors,
    gen_sparse_beta,
    run_case,
    run_replicates,
    simulate_data,
    threshold_sweep,
)
from .solvers import (
    ITERATIVE_METHODS,
    ContractViolation,
    DivergenceError,
    IterationState,
    StoppingRule,
    equivalent_filter,
    run_method,
    stop_adjusted_optimal,
    stop_discrepancy,
)
from .spectral import InputError, RegressionProblem, SpectralDecomposition, apply_spectral_filter, thin_svd

__version__ = "0.1.0"


__all__ = [
    "BootstrapReport",
    "ClosedFormUnavailable",
    "ConditionReport",
    "ContractViolation",
    "CoverageConfig",
    "DivergenceError",
    "EstimateBundle",
    "FilterSpec",
    "Fit",
    "ITERATIVE_METHODS",
    "InputError",
    "IterationState",
    "Method",
    "MethodConfig",
    "REGULARIZING_METHODS",
    "RegressionProblem",
    "SimulationConfig",
    "SimulationReport",
    "SpectralDecomposition",
    "StopConfig",
    "StoppingRule",
    "TauVector",
    "apply_spectral_filter",
    "baseline_estimate",
    "bias_value",
    "coverage_experiment",
    "debias",
    "debiased_generator_value",
    "equivalent_filter",
    "estimate_debiased_spectral",
    "estimate_spectral",
    "fit_closed_form",
    "fit_iterative",
    "gaussian_reference_cdf",
    "gen_design",
    "gen_errors",
    "gen_sparse_beta",
    "generator_value",
    "lasso",
    "make_bundle",
    "max_statistic",
    "mittag_leffler",
    "residual_variance",
    "run_case",
    "run_method",
    "run_replicates",
    "simulate_data",
    "stop_adjusted_optimal",
    "stop_discrepancy",
    "tau_debiased",
    "tau_plain",
    "thin_svd",
    "threshold",
    "threshold_sweep",
    "verify_generator_conditions",
    "verify_qualification",
    "wild_bootstrap",
]
