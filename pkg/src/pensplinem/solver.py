"""Penalized M-estimation of a spline mean curve by iteratively reweighted
least squares.

The objective is

    (1/n) sum_i (1/m_i) sum_j rho(Y_ij - f(T_ij))  +  lam * integral |f^(r)|^2

over splines f on a fixed knot vector.  Each IRLS pass solves the normal
equations (B' O W B + lam P) a = B' O W y with O the per-observation weights
1/(n m_i) and W the loss reweighting at the current residuals; for the square
loss a single pass is the exact minimizer.  The inner solve uses a banded
symmetric positive-definite factorization (band half-width order - 1), O(K)
per iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import KnotVector, LongData, SplineFunction, _local_basis, check_existence
from .penalty import PenaltyConfig, penalty_matrix

__all__ = [
    "SingularSystem",
    "SolverConfig",
    "FitResult",
    "fit_penalized",
    "hat_trace",
    "evaluate_objective",
]

log = logging.getLogger(__name__)


class SingularSystem(RuntimeError):
    """The penalized normal equations are singular (at lam = 0 this means the
    design fails the sampling-point interlacing condition)."""

    def __init__(self, message: str, failed_index: int | None = None) -> None:
        super().__init__(message)
        self.failed_index = failed_index


@dataclass(frozen=True)
class SolverConfig:
    """IRLS controls: loss object, iteration cap, and the relative-L2
    coefficient-change tolerance used to declare convergence."""

    loss: object
    max_iterations: int = 200
    tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass(frozen=True)
class FitResult:
    """Fitted spline plus bookkeeping: penalty level, IRLS iteration count and
    convergence flag, effective degrees of freedom (hat-matrix trace) and the
    final objective value evaluated with the unsmoothed loss."""

    spline: SplineFunction
    lam: float
    iterations: int
    converged: bool
    edf: float
    objective: float


class _System:
    """Precomputed state for repeated weighted penalized solves on one
    (knot vector, penalty, data) triple.

    Observations are placed in a canonical order (lexicographic in time,
    value, weight) so that assembled matrices, and hence every downstream
    number, are bit-identical under any permutation or relabeling of the
    input records.

    The inner solve uses a banded Cholesky factorization (O(K) per pass).
    ``dense_solve`` switches to a dense factorization, matching the
    computational profile of full-rank smoothers whose basis grows with the
    number of distinct sampling points.
    """

    def __init__(
        self,
        kv: KnotVector,
        cfg: PenaltyConfig | None,
        data: LongData,
        dense_solve: bool = False,
    ):
        if cfg is not None and cfg.kv is not kv and not np.array_equal(cfg.kv.knots, kv.knots):
            raise ValueError("penalty was built for a different knot vector")
        self.kv = kv
        self.cfg = cfg
        self.data = data
        self.dim = kv.dim
        p = kv.order
        self.p = p

        w_obs = data.obs_weights
        order = np.lexsort((w_obs, data.values, data.times))
        self.order = order
        self.y = data.values[order]
        self.w_obs = w_obs[order]
        first, vals = _local_basis(kv.knots, p, data.times[order])
        self.first = first
        self.vals = vals
        self.gather = first[:, None] + np.arange(p)

        # Group observations sharing the same first basis index; the banded
        # normal matrix and right-hand side are then assembled with a single
        # elementwise product and one grouped reduction per solve.
        starts = np.flatnonzero(np.r_[True, first[1:] != first[:-1]])
        self.starts = starts
        self.group_first = first[starts]
        pair_rows = []
        self.pair_index = []  # (band offset d, column shift a) per product row
        for d in range(p):
            for a in range(p - d):
                pair_rows.append(vals[:, a] * vals[:, a + d])
                self.pair_index.append((d, a))
        for a in range(p):
            pair_rows.append(vals[:, a] * self.y)
        self.products = np.ascontiguousarray(np.vstack(pair_rows))  # (pairs + p, N)
        self.n_pairs = len(self.pair_index)

        self.P = (
            penalty_matrix(cfg) if cfg is not None else np.zeros((self.dim, self.dim))
        )
        self.P_band = np.zeros((p, self.dim))
        for d in range(p):
            self.P_band[d, : self.dim - d] = np.diagonal(self.P, -d)
        self.dense_solve = dense_solve

    # -- assembly -----------------------------------------------------------

    def _band_and_rhs(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lower-banded storage of B' O W B and the vector B' O W y."""
        dw = self.w_obs * w
        p, dim = self.p, self.dim
        sums = np.add.reduceat(self.products * dw[None, :], self.starts, axis=1)
        band = np.zeros((p, dim))
        gf = self.group_first
        # Group-first indices are distinct, so fancy-indexed += is safe per row.
        for row, (d, a) in enumerate(self.pair_index):
            band[d, gf + a] += sums[row]
        rhs = np.zeros(dim)
        for a in range(p):
            rhs[gf + a] += sums[self.n_pairs + a]
        return band, rhs

    def normal_matrix(self, w: np.ndarray) -> np.ndarray:
        """Dense B' O W B (symmetric, band half-width order - 1)."""
        band, _ = self._band_and_rhs(w)
        return _band_to_dense(band)

    # -- linear algebra ------------------------------------------------------

    def solve(self, w: np.ndarray, lam: float) -> np.ndarray:
        band, rhs = self._band_and_rhs(w)
        try:
            if self.dense_solve:
                M = _band_to_dense(band) + lam * self.P
                return linalg.cho_solve(linalg.cho_factor(M, lower=True), rhs)
            return linalg.solveh_banded(band + lam * self.P_band, rhs, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"penalized system not positive definite: {exc}") from None

    def fitted(self, coef: np.ndarray) -> np.ndarray:
        return np.einsum("np,np->n", self.vals, coef[self.gather])

    def irls(
        self,
        loss,
        lam: float,
        max_iterations: int,
        tolerance: float,
        init: np.ndarray | None = None,
        record: list | None = None,
    ) -> tuple[np.ndarray, int, bool, np.ndarray, np.ndarray]:
        """Run IRLS; returns (coefficients, iterations, converged, final
        per-observation loss weights, final residuals)."""
        if init is None:
            coef = self.solve(np.ones(self.y.size), lam)
        else:
            coef = np.asarray(init, dtype=float)
        converged = False
        iterations = 0
        for it in range(max_iterations):
            resid = self.y - self.fitted(coef)
            w = loss.irls_weight(resid)
            new = self.solve(w, lam)
            if record is not None:
                record.append(new)
            iterations = it + 1
            delta = np.linalg.norm(new - coef) / max(np.linalg.norm(coef), 1e-12)
            coef = new
            if delta < tolerance:
                converged = True
                break
        resid = self.y - self.fitted(coef)
        return coef, iterations, converged, loss.irls_weight(resid), resid

    def hat_trace_from_weights(self, w: np.ndarray, lam: float) -> float:
        """tr((B'OWB + lam P)^{-1} B'OWB), via the symmetric pencil.

        With A = B'OWB positive definite the trace equals
        sum_j 1 / (1 + lam * theta_j) over the generalized eigenvalues of
        (P, A); this form is stable for every lam including lam = 0 and very
        large values.  When A is rank-deficient but A + lam P is positive
        definite, the equivalent pencil (A, A + lam P) is used instead.
        """
        A = self.normal_matrix(w)
        try:
            theta = linalg.eigh(self.P, A, eigvals_only=True)
            theta = np.maximum(theta, 0.0)
            return float(np.sum(1.0 / (1.0 + lam * theta)))
        except np.linalg.LinAlgError:
            pass
        M = A + lam * self.P
        try:
            frac = linalg.eigh(A, M, eigvals_only=True)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"hat matrix undefined: {exc}") from None
        return float(np.sum(np.clip(frac, 0.0, 1.0)))

    def data_term(self, loss, resid: np.ndarray) -> float:
        return float(np.sum(self.w_obs * loss.rho(resid)))

    def penalty_quadratic(self, coef: np.ndarray) -> float:
        return float(coef @ self.P @ coef)

    def to_canonical(self, per_record: np.ndarray) -> np.ndarray:
        """Reorder a per-record array from the data's order to the system's
        canonical order."""
        return np.asarray(per_record)[self.order]


def _band_to_dense(band: np.ndarray) -> np.ndarray:
    nb, dim = band.shape
    out = np.zeros((dim, dim))
    for d in range(nb):
        idx = np.arange(dim - d)
        out[idx + d, idx] = band[d, : dim - d]
        if d:
            out[idx, idx + d] = band[d, : dim - d]
    return out


def _check_solvable(kv: KnotVector, data: LongData, lam: float) -> None:
    if data.total < kv.dim:
        raise SingularSystem(
            f"{data.total} observations cannot identify {kv.dim} basis functions",
            failed_index=None,
        )
    if lam == 0.0:
        chk = check_existence(kv, data)
        if not chk.ok:
            raise SingularSystem(
                "unpenalized fit is not identified: no sampling point lies inside "
                f"the support of basis function {chk.failed_index} "
                f"(of {kv.dim}); add a penalty (lam > 0) or change the knots",
                failed_index=chk.failed_index,
            )


def fit_penalized(
    kv: KnotVector,
    cfg: PenaltyConfig | None,
    data: LongData,
    lam: float,
    solver: SolverConfig,
    *,
    system: _System | None = None,
    init: np.ndarray | None = None,
) -> FitResult:
    """Minimize the penalized empirical loss over the spline space.

    ``cfg`` may be None only for lam = 0 (no penalty term).  IRLS starts from
    the square-loss solution at the same lam unless ``init`` is given.  If the
    iteration cap is reached the partial result is returned with
    ``converged=False`` rather than raising.
    """
    if lam < 0:
        raise ValueError(f"penalty parameter must be >= 0, got {lam}")
    if cfg is None and lam != 0.0:
        raise ValueError("a PenaltyConfig is required when lam > 0")
    _check_solvable(kv, data, lam)
    sys_ = system if system is not None else _System(kv, cfg, data)
    coef, iterations, converged, w, resid = sys_.irls(
        solver.loss, lam, solver.max_iterations, solver.tolerance, init=init
    )
    if not converged:
        log.warning(
            "IRLS did not converge in %d iterations (lam=%g)", iterations, lam
        )
    edf = sys_.hat_trace_from_weights(w, lam)
    objective = sys_.data_term(solver.loss, resid) + lam * sys_.penalty_quadratic(coef)
    return FitResult(
        spline=SplineFunction(kv, coef),
        lam=float(lam),
        iterations=iterations,
        converged=converged,
        edf=edf,
        objective=objective,
    )


def hat_trace(
    kv: KnotVector,
    cfg: PenaltyConfig | None,
    data: LongData,
    lam: float,
    weights: np.ndarray,
) -> float:
    """Effective degrees of freedom of the weighted penalized smoother.

    ``weights`` are per-record loss weights in the data's record order (the
    1/(n m_i) observation weights are applied internally).
    """
    sys_ = _System(kv, cfg, data)
    return sys_.hat_trace_from_weights(sys_.to_canonical(weights), lam)


def evaluate_objective(
    kv: KnotVector,
    cfg: PenaltyConfig | None,
    data: LongData,
    spline: SplineFunction,
    lam: float,
    loss,
) -> float:
    """Exact objective value at ``spline``: weighted empirical loss plus
    lam * coef' P coef."""
    if not np.array_equal(spline.basis.knots, kv.knots) or spline.basis.order != kv.order:
        raise ValueError("spline is not expressed over the given knot vector")
    resid = data.values - spline(data.times)
    value = float(np.sum(data.obs_weights * loss.rho(resid)))
    if cfg is not None and lam != 0.0:
        P = penalty_matrix(cfg)
        value += lam * float(spline.coefficients @ P @ spline.coefficients)
    return value
