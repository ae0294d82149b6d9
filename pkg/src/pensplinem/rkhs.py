"""Reproducing-kernel diagnostics for the spline space under the
penalty-weighted inner product <f, g> + lam <f^(r), g^(r)>.

Simultaneously diagonalizing the Gram matrix (positive definite) and the
roughness matrix (positive semidefinite) yields functions e_1, ..., e_dim
with <e_i, e_j> = delta_ij and <e_i^(r), e_j^(r)> = gamma_j delta_ij.  The
reproducing kernel of the space is then

    R(x, y) = sum_j e_j(x) e_j(y) / (1 + lam * gamma_j),

its quadratic form on any square-integrable f is bounded by the squared L2
norm of f, and point evaluation satisfies f(x) = <f, R(x, .)>.

These identities make sharp numerical invariants; this module computes the
ingredients and bundles the checks into a JSON-able report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.integrate import simpson

from .basis import KnotVector, SplineFunction, _local_basis
from .penalty import PenaltyConfig, gram_matrix, penalty_matrix

__all__ = [
    "Diagonalization",
    "diagonalize",
    "kernel_value",
    "kernel_section",
    "kernel_quadratic_form",
    "sup_norm_ratio",
    "diagnostics_report",
]


@dataclass(frozen=True)
class Diagonalization:
    """Joint eigensystem of the Gram and roughness matrices.

    Column j of ``transform`` holds the B-spline coefficients of e_j; the
    nonnegative ``gammas`` are sorted ascending, the first ``deriv`` of them
    numerically zero (roughness null space).
    """

    kv: KnotVector
    deriv: int
    transform: np.ndarray = field(repr=False)
    gammas: np.ndarray = field(repr=False)

    @property
    def basis_functions(self) -> tuple[SplineFunction, ...]:
        return tuple(
            SplineFunction(self.kv, self.transform[:, j])
            for j in range(self.kv.dim)
        )

    @property
    def null_count(self) -> int:
        """Number of numerically-zero roughness eigenvalues (the dimension of
        the unpenalized polynomial space).  The cutoff scales with the largest
        eigenvalue so the count stays exact when the eigenvalues are huge."""
        cutoff = max(1e-8, 1e-12 * float(self.gammas[-1]))
        return int(np.sum(self.gammas < cutoff))


def diagonalize(kv: KnotVector, cfg: PenaltyConfig) -> Diagonalization:
    """Solve the generalized symmetric eigenproblem P e = gamma G e.

    Eigenvalues are clamped at zero (they are nonnegative in exact
    arithmetic); a numerically singular Gram matrix raises LinAlgError.
    """
    G = gram_matrix(kv)
    P = penalty_matrix(cfg)
    gammas, E = linalg.eigh(P, G)
    return Diagonalization(
        kv=kv, deriv=cfg.deriv, transform=E, gammas=np.maximum(gammas, 0.0)
    )


def _eigenbasis_at(diag: Diagonalization, xs: np.ndarray) -> np.ndarray:
    """Matrix of e_j values, one row per point in xs."""
    kv = diag.kv
    first, vals = _local_basis(kv.knots, kv.order, np.atleast_1d(xs))
    dense = np.zeros((first.size, kv.dim))
    cols = first[:, None] + np.arange(kv.order)
    np.put_along_axis(dense, cols, vals, axis=1)
    return dense @ diag.transform


def kernel_value(diag: Diagonalization, lam: float, x: float, y: float) -> float:
    """R(x, y); symmetric in its arguments."""
    ex, ey = _eigenbasis_at(diag, np.asarray([x, y]))
    return float(np.sum(ex * ey / (1.0 + lam * diag.gammas)))


def kernel_section(diag: Diagonalization, lam: float, x: float) -> SplineFunction:
    """The spline y -> R(x, y)."""
    ex = _eigenbasis_at(diag, np.asarray([x]))[0]
    coef = diag.transform @ (ex / (1.0 + lam * diag.gammas))
    return SplineFunction(diag.kv, coef)


def _uniform_grid(n_points: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_points)


def kernel_quadratic_form(
    diag: Diagonalization, lam: float, f, n_points: int = 2001
) -> float:
    """Double integral of R(x, y) f(x) f(y), computed spectrally as
    sum_j <f, e_j>^2 / (1 + lam * gamma_j) with composite-Simpson inner
    products.  Never exceeds the squared L2 norm of f beyond quadrature
    error."""
    xs = _uniform_grid(n_points)
    fv = np.asarray(f(xs), dtype=float)
    ev = _eigenbasis_at(diag, xs)
    coef = simpson(ev * fv[:, None], x=xs, axis=0)
    return float(np.sum(coef * coef / (1.0 + lam * diag.gammas)))


def sup_norm_ratio(diag: Diagonalization, lam: float, n_points: int = 1001) -> float:
    """max_x sqrt(R(x, x)) divided by min(sqrt(K), lam^(-1/(4r))).

    The numerator equals the worst-case norm of the evaluation functional;
    stability of the ratio across (K, lam) verifies that the bounding
    constant does not drift.
    """
    xs = _uniform_grid(n_points)
    ev = _eigenbasis_at(diag, xs)
    r_diag = np.sum(ev * ev / (1.0 + lam * diag.gammas), axis=1)
    numerator = float(np.sqrt(np.max(r_diag)))
    k_part = np.sqrt(diag.kv.interior_count)
    lam_part = lam ** (-1.0 / (4.0 * diag.deriv)) if lam > 0 else np.inf
    return numerator / min(k_part, lam_part)


def _rkhs_inner(diag: Diagonalization, lam: float, a: np.ndarray, b: np.ndarray,
                G: np.ndarray, P: np.ndarray) -> float:
    return float(a @ G @ b + lam * (a @ P @ b))


def diagnostics_report(
    kv: KnotVector,
    cfg: PenaltyConfig,
    lam_values=(0.0, 1e-4, 1e-1),
    n_functions: int = 100,
    seed: int = 0,
) -> dict:
    """Run the full invariant suite and return a JSON-able report.

    Checks: diagonalization residuals, roughness null-space count,
    reproducing property on random splines, the quadratic-form bound on
    random smooth functions, the kernel trace identity, and the sup-norm
    ratio values.
    """
    rng = np.random.default_rng(seed)
    diag = diagonalize(kv, cfg)
    G = gram_matrix(kv)
    P = penalty_matrix(cfg)
    E = diag.transform

    checks: dict[str, dict] = {}

    resid_g = float(np.max(np.abs(E.T @ G @ E - np.eye(kv.dim))))
    resid_p = float(np.max(np.abs(E.T @ P @ E - np.diag(diag.gammas))))
    checks["diagonalization_residual"] = {
        "value": max(resid_g, resid_p),
        "threshold": 1e-8,
        "passed": max(resid_g, resid_p) < 1e-8,
    }

    checks["roughness_null_dimension"] = {
        "value": diag.null_count,
        "threshold": cfg.deriv,
        "passed": diag.null_count == cfg.deriv,
    }

    worst_repro = 0.0
    for _ in range(n_functions):
        coef = rng.standard_normal(kv.dim)
        x = float(rng.uniform())
        lam = float(rng.choice(np.asarray(lam_values)))
        section = kernel_section(diag, lam, x)
        inner = _rkhs_inner(diag, lam, coef, section.coefficients, G, P)
        fx = SplineFunction(kv, coef)(x)
        worst_repro = max(worst_repro, abs(inner - fx))
    checks["reproducing_property"] = {
        "value": worst_repro,
        "threshold": 1e-7,
        "passed": worst_repro < 1e-7,
    }

    xs = _uniform_grid(2001)
    worst_excess = -np.inf
    for _ in range(n_functions):
        freqs = rng.integers(1, 12, size=3)
        amps = rng.standard_normal(3)

        def f(x, freqs=freqs, amps=amps):
            return sum(a * np.sin(np.pi * q * x) for a, q in zip(amps, freqs))

        lam = float(rng.choice(np.asarray(lam_values)))
        qf = kernel_quadratic_form(diag, lam, f)
        norm_sq = float(simpson(f(xs) ** 2, x=xs))
        worst_excess = max(worst_excess, qf - norm_sq)
    checks["quadratic_form_bound"] = {
        "value": worst_excess,
        "threshold": 1e-6,
        "passed": worst_excess < 1e-6,
    }

    trace_errs = []
    for lam in lam_values:
        ev = _eigenbasis_at(diag, xs)
        r_diag = np.sum(ev * ev / (1.0 + lam * diag.gammas), axis=1)
        lhs = float(simpson(r_diag, x=xs))
        rhs = float(np.sum(1.0 / (1.0 + lam * diag.gammas)))
        trace_errs.append(abs(lhs - rhs))
    checks["kernel_trace_identity"] = {
        "value": max(trace_errs),
        "threshold": 1e-6,
        "passed": max(trace_errs) < 1e-6,
    }

    checks["sup_norm_ratio"] = {
        "value": {f"{lam:g}": sup_norm_ratio(diag, lam) for lam in lam_values},
        "threshold": None,
        "passed": True,
    }

    return {
        "order": kv.order,
        "penalty_order": cfg.deriv,
        "interior_knots": kv.interior_count,
        "all_passed": all(c["passed"] for c in checks.values()),
        "checks": checks,
    }
