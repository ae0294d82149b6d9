"""Penalty-parameter selection by weighted generalized cross validation.

The score at a candidate lam is

    sum_ij omega_ij w_ij r_ij^2 / (1 - tr(H_lam) / N)^2

where omega_ij = 1/(n m_i), the w_ij are the converged IRLS loss weights at
lam (frozen), r_ij the residuals and H_lam the weighted hat matrix built with
the same weights.  For the square loss the weights are one and the score is
classical weighted GCV.  Candidates where tr(H)/N >= 1 score +inf.

Grid points are mutually independent; this implementation sweeps the grid in
order, warm-starting each IRLS from the previous solution, which leaves every
score deterministic for a given (data, grid, solver config).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import KnotVector, LongData
from .penalty import PenaltyConfig
from .solver import FitResult, SingularSystem, SolverConfig, _System, fit_penalized

__all__ = ["GcvResult", "gcv_score", "select_lambda", "auto_grid"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GcvResult:
    """Grid of candidate penalties, their scores, and the winning refit."""

    lambda_grid: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    best_lambda: float
    best_fit: FitResult


def auto_grid(count: int = 40, lo: float = 1e-9, hi: float = 1e1) -> np.ndarray:
    """Default log-spaced candidate grid."""
    return np.logspace(np.log10(lo), np.log10(hi), count)


def _score_system(
    system: _System, lam: float, solver: SolverConfig, init=None
) -> tuple[float, np.ndarray]:
    coef, _, _, w, resid = system.irls(
        solver.loss, lam, solver.max_iterations, solver.tolerance, init=init
    )
    numerator = float(np.sum(system.w_obs * w * resid * resid))
    trace = system.hat_trace_from_weights(w, lam)
    n_obs = system.y.size
    if trace / n_obs >= 1.0:
        return float("inf"), coef
    return numerator / (1.0 - trace / n_obs) ** 2, coef


def gcv_score(
    kv: KnotVector,
    cfg: PenaltyConfig,
    data: LongData,
    lam: float,
    solver: SolverConfig,
) -> float:
    """Weighted GCV score at a single penalty value."""
    from .solver import _check_solvable

    _check_solvable(kv, data, lam)
    score, _ = _score_system(_System(kv, cfg, data), lam, solver)
    return score


def select_lambda(
    kv: KnotVector,
    cfg: PenaltyConfig,
    data: LongData,
    grid,
    solver: SolverConfig,
    *,
    system: _System | None = None,
) -> GcvResult:
    """Score every grid point and refit at the winner.

    ``grid`` is an explicit sequence of penalties or ``"auto"`` (40 log-spaced
    values in [1e-9, 1e1]).  Ties are broken toward the larger penalty, i.e.
    the smoother fit.  Raises SingularSystem only if every grid point is
    singular.
    """
    if isinstance(grid, str):
        if grid != "auto":
            raise ValueError(f"unknown grid rule {grid!r}")
        lam_grid = auto_grid()
    else:
        lam_grid = np.asarray(grid, dtype=float)
        if lam_grid.ndim != 1 or lam_grid.size == 0:
            raise ValueError("penalty grid must be a nonempty 1-d sequence")
        if np.any(lam_grid < 0):
            raise ValueError("penalty values must be >= 0")

    from .solver import _check_solvable

    if system is None:
        system = _System(kv, cfg, data)
    scores = np.full(lam_grid.size, np.inf)
    warm = None
    n_singular = 0
    last_error: SingularSystem | None = None
    # Sweep from the smoothest (largest) penalty down: those fits converge in
    # few passes and warm-start the harder small-penalty fits.
    sweep = np.argsort(-lam_grid, kind="stable")
    for i in sweep:
        lam = lam_grid[i]
        try:
            _check_solvable(kv, data, float(lam))
            scores[i], warm = _score_system(system, float(lam), solver, init=warm)
        except SingularSystem as exc:
            n_singular += 1
            last_error = exc
            log.debug("grid point lam=%g singular: %s", lam, exc)
    if n_singular == lam_grid.size:
        raise SingularSystem(
            f"every candidate penalty is singular: {last_error}"
        )

    best_idx = 0
    for i in range(1, lam_grid.size):
        if scores[i] < scores[best_idx] or (
            scores[i] == scores[best_idx] and lam_grid[i] > lam_grid[best_idx]
        ):
            best_idx = i
    best_lambda = float(lam_grid[best_idx])
    best_fit = fit_penalized(kv, cfg, data, best_lambda, solver, system=system)
    return GcvResult(
        lambda_grid=lam_grid,
        scores=scores,
        best_lambda=best_lambda,
        best_fit=best_fit,
    )
