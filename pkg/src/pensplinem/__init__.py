"""Penalized spline M-estimation of mean functions for discretely sampled
longitudinal and functional data.

Fits a spline mean curve by minimizing a convex empirical loss (square,
absolute, or Huber) plus an exact integrated squared-derivative penalty,
with iteratively reweighted least squares, weighted GCV penalty selection,
a finite-sample solvability check for the unpenalized problem, reproducing
kernel diagnostics, and a seeded Monte Carlo comparison harness.
"""

from .basis import (
    DataFormatError,
    ExistenceCheck,
    KnotVector,
    LongData,
    SplineFunction,
    check_existence,
    design_matrix,
    eval_bsplines,
    make_knots,
)
from .loss import AbsoluteLoss, HuberLoss, SquareLoss, parse_loss
from .penalty import PenaltyConfig, gram_matrix, penalty_matrix
from .rkhs import (
    Diagonalization,
    diagnostics_report,
    diagonalize,
    kernel_quadratic_form,
    kernel_section,
    kernel_value,
    sup_norm_ratio,
)
from .select import GcvResult, auto_grid, gcv_score, select_lambda
from .simulate import (
    ESTIMATORS,
    EstimatorSummary,
    SimConfig,
    SimResult,
    generate_dataset,
    mean_function,
    mse_on_grid,
    rate_experiment,
    run_study,
)
from .solver import (
    FitResult,
    SingularSystem,
    SolverConfig,
    evaluate_objective,
    fit_penalized,
    hat_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AbsoluteLoss",
    "DataFormatError",
    "Diagonalization",
    "ESTIMATORS",
    "EstimatorSummary",
    "ExistenceCheck",
    "FitResult",
    "GcvResult",
    "HuberLoss",
    "KnotVector",
    "LongData",
    "PenaltyConfig",
    "SimConfig",
    "SimResult",
    "SingularSystem",
    "SolverConfig",
    "SplineFunction",
    "SquareLoss",
    "auto_grid",
    "check_existence",
    "design_matrix",
    "diagnostics_report",
    "diagonalize",
    "eval_bsplines",
    "evaluate_objective",
    "fit_penalized",
    "gcv_score",
    "generate_dataset",
    "gram_matrix",
    "hat_trace",
    "kernel_quadratic_form",
    "kernel_section",
    "kernel_value",
    "make_knots",
    "mean_function",
    "mse_on_grid",
    "parse_loss",
    "penalty_matrix",
    "rate_experiment",
    "run_study",
    "select_lambda",
    "sup_norm_ratio",
]
