import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import simpson

from pensplinem import (
    PenaltyConfig,
    SplineFunction,
    diagnostics_report,
    diagonalize,
    gram_matrix,
    kernel_quadratic_form,
    kernel_section,
    kernel_value,
    make_knots,
    penalty_matrix,
    sup_norm_ratio,
)

LAMBDAS = (0.0, 1e-4, 1e-1)


@pytest.fixture(scope="module")
def diag10():
    kv = make_knots(4, 10)
    cfg = PenaltyConfig(kv, 2)
    return kv, cfg, diagonalize(kv, cfg)


def _rkhs_inner(kv, cfg, lam, a, b):
    G = gram_matrix(kv)
    P = penalty_matrix(cfg)
    return float(a @ G @ b + lam * (a @ P @ b))


def test_simultaneous_diagonalization_residuals(diag10):
    kv, cfg, diag = diag10
    E = diag.transform
    G = gram_matrix(kv)
    P = penalty_matrix(cfg)
    npt.assert_allclose(E.T @ G @ E, np.eye(kv.dim), atol=1e-8)
    npt.assert_allclose(E.T @ P @ E, np.diag(diag.gammas), atol=1e-8)
    assert np.all(np.diff(diag.gammas) >= 0)
    assert np.all(diag.gammas >= 0)


@pytest.mark.parametrize("p,r", [(4, 2), (4, 1), (4, 3), (3, 2), (5, 2)])
def test_null_eigenvalue_count_equals_penalty_order(p, r):
    kv = make_knots(p, 9)
    diag = diagonalize(kv, PenaltyConfig(kv, r))
    assert diag.null_count == r
    if r <= 2:  # absolute cutoff is already clean at this scale
        assert int(np.sum(diag.gammas < 1e-8)) == r


def test_gammas_depend_only_on_space(diag10):
    kv, cfg, diag = diag10
    again = diagonalize(kv, cfg)
    npt.assert_array_equal(diag.gammas, again.gammas)


def test_kernel_symmetry(diag10, rng):
    _, _, diag = diag10
    for _ in range(20):
        x, y = rng.uniform(size=2)
        lam = float(rng.choice(LAMBDAS))
        assert kernel_value(diag, lam, x, y) == kernel_value(diag, lam, y, x)


def test_projection_identity_at_zero_lambda(diag10, rng):
    # lam = 0: the kernel is the L2 projector onto the spline space, so
    # integrating it against any member returns that member
    kv, _, diag = diag10
    xs = np.linspace(0, 1, 4001)
    coef = rng.standard_normal(kv.dim)
    g = SplineFunction(kv, coef)
    g_vals = g(xs)
    for x in rng.uniform(size=10):
        section = kernel_section(diag, 0.0, float(x))
        integral = simpson(section(xs) * g_vals, x=xs)
        assert integral == pytest.approx(g(float(x)), abs=1e-6)


def test_reproducing_property(diag10, rng):
    kv, cfg, diag = diag10
    worst = 0.0
    for _ in range(100):
        coef = rng.standard_normal(kv.dim)
        x = float(rng.uniform())
        lam = float(rng.choice(LAMBDAS))
        section = kernel_section(diag, lam, x)
        inner = _rkhs_inner(kv, cfg, lam, coef, section.coefficients)
        worst = max(worst, abs(inner - SplineFunction(kv, coef)(x)))
    assert worst < 1e-7


def test_quadratic_form_tight_inside_space(diag10):
    kv, _, diag = diag10
    e1 = diag.basis_functions[0]
    value = kernel_quadratic_form(diag, 0.0, e1)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_quadratic_form_vanishes_orthogonal_to_space(diag10, rng):
    kv, _, diag = diag10
    xs = np.linspace(0, 1, 4001)

    def rough(x):
        return np.sin(29 * np.pi * x) + 0.5 * np.cos(41 * np.pi * x)

    # remove the L2 projection onto the spline space
    E = diag.transform
    from pensplinem.rkhs import _eigenbasis_at

    ev = _eigenbasis_at(diag, xs)
    coefs = simpson(ev * rough(xs)[:, None], x=xs, axis=0)

    def orthogonal(x):
        return rough(x) - _eigenbasis_at(diag, np.atleast_1d(x)) @ coefs

    value = kernel_quadratic_form(diag, 0.0, lambda x: orthogonal(x).ravel())
    assert value < 1e-6


def test_quadratic_form_bounded_by_l2_norm(diag10, rng):
    _, _, diag = diag10
    value = kernel_quadratic_form(diag, 0.01, lambda t: np.sin(7 * np.pi * t))
    assert value <= 0.5 + 1e-6  # the squared norm of sin(7 pi t) is exactly 1/2
    xs = np.linspace(0, 1, 2001)
    for _ in range(50):
        freqs = rng.integers(1, 15, size=3)
        amps = rng.standard_normal(3)

        def f(x):
            return sum(a * np.sin(np.pi * q * x) for a, q in zip(amps, freqs))

        lam = float(rng.choice(LAMBDAS))
        norm_sq = float(simpson(f(xs) ** 2, x=xs))
        assert kernel_quadratic_form(diag, lam, f) <= norm_sq + 1e-6


def test_kernel_trace_identity(diag10):
    _, _, diag = diag10
    xs = np.linspace(0, 1, 4001)
    from pensplinem.rkhs import _eigenbasis_at

    ev = _eigenbasis_at(diag, xs)
    for lam in LAMBDAS:
        diag_vals = np.sum(ev * ev / (1.0 + lam * diag.gammas), axis=1)
        lhs = simpson(diag_vals, x=xs)
        rhs = np.sum(1.0 / (1.0 + lam * diag.gammas))
        assert lhs == pytest.approx(rhs, abs=1e-6)


def test_kernel_diagonal_nonnegative(diag10):
    _, _, diag = diag10
    xs = np.linspace(0, 1, 1001)
    for lam in LAMBDAS:
        vals = [kernel_value(diag, lam, float(x), float(x)) for x in xs[::50]]
        assert min(vals) >= 0.0


def test_sup_norm_ratio_stability():
    lam = 1e-4
    ratios = []
    for K in (10, 40):
        kv = make_knots(4, K)
        diag = diagonalize(kv, PenaltyConfig(kv, 2))
        ratios.append(sup_norm_ratio(diag, lam))
    assert max(ratios) / min(ratios) < 3.0


def test_sup_norm_ratio_lambda_zero_finite(diag10):
    _, _, diag = diag10
    value = sup_norm_ratio(diag, 0.0)
    assert np.isfinite(value) and value > 0


def test_diagnostics_report_passes():
    kv = make_knots(4, 10)
    report = diagnostics_report(kv, PenaltyConfig(kv, 2), n_functions=30, seed=5)
    assert report["all_passed"]
    assert report["checks"]["roughness_null_dimension"]["value"] == 2
