import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize

from pensplinem import (
    AbsoluteLoss,
    HuberLoss,
    LongData,
    PenaltyConfig,
    SingularSystem,
    SolverConfig,
    SplineFunction,
    SquareLoss,
    design_matrix,
    evaluate_objective,
    fit_penalized,
    hat_trace,
    make_knots,
    penalty_matrix,
)
from pensplinem.solver import _System

from conftest import random_long_data


@pytest.fixture
def setup(rng):
    kv = make_knots(4, 8)
    cfg = PenaltyConfig(kv, 2)
    data = random_long_data(rng, n_subjects=20, m_low=8, m_high=14)
    return kv, cfg, data


def _smoothed_objective(sys_, loss, lam, coef):
    resid = sys_.y - sys_.fitted(coef)
    return float(np.sum(sys_.w_obs * loss.smoothed_rho(resid))) + lam * sys_.penalty_quadratic(coef)


# ------------------------------------------------------------------- fitting


def test_square_loss_single_pass_matches_normal_equations(setup):
    kv, cfg, data = setup
    for lam in [0.0, 1e-4, 1e-1]:
        fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=SquareLoss()))
        assert fit.iterations == 1 and fit.converged
        B = design_matrix(kv, data).toarray()
        om = data.obs_weights
        P = penalty_matrix(cfg)
        direct = np.linalg.solve(B.T @ (B * om[:, None]) + lam * P, B.T @ (om * data.values))
        npt.assert_allclose(fit.spline.coefficients, direct, atol=1e-10)


def test_square_loss_invariant_to_iteration_cap(setup):
    kv, cfg, data = setup
    fits = [
        fit_penalized(kv, cfg, data, 1e-3, SolverConfig(loss=SquareLoss(), max_iterations=m))
        for m in (1, 5, 200)
    ]
    for fit in fits[1:]:
        npt.assert_array_equal(fit.spline.coefficients, fits[0].spline.coefficients)


def test_lad_constant_spline_recovers_median():
    kv = make_knots(1, 0)
    data = LongData([1, 1, 1], [0.1, 0.5, 0.9], [1.0, 2.0, 9.0])
    fit = fit_penalized(kv, None, data, 0.0, SolverConfig(loss=AbsoluteLoss()))
    assert fit.converged
    assert fit.spline.coefficients[0] == pytest.approx(2.0, abs=1e-6)


def test_huber_objective_matches_coordinate_search_oracle(rng):
    kv = make_knots(4, 5)
    cfg = PenaltyConfig(kv, 2)
    lam = 1e-3
    loss = HuberLoss(k=1.345)
    data = random_long_data(rng, n_subjects=10, m_low=20, m_high=20, noise=1.0)
    assert data.total == 200
    fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=loss))

    def objective(coef):
        return evaluate_objective(kv, cfg, data, SplineFunction(kv, coef), lam, loss)

    oracle = minimize(
        objective,
        np.zeros(kv.dim),
        method="Powell",
        options={"xtol": 1e-10, "ftol": 1e-12, "maxiter": 20000},
    )
    assert abs(fit.objective - oracle.fun) <= 1e-4 * abs(oracle.fun)


def test_partial_result_on_iteration_cap(setup):
    kv, cfg, data = setup
    fit = fit_penalized(
        kv, cfg, data, 1e-5, SolverConfig(loss=AbsoluteLoss(), max_iterations=2)
    )
    assert not fit.converged
    assert fit.iterations == 2
    assert np.all(np.isfinite(fit.spline.coefficients))


# ------------------------------------------------------------------ hat trace


def test_hat_trace_unpenalized_equals_dimension(setup):
    kv, cfg, data = setup
    tr = hat_trace(kv, cfg, data, 0.0, np.ones(data.total))
    assert tr == pytest.approx(kv.dim, abs=1e-8)


def test_hat_trace_large_penalty_limit(setup):
    kv, cfg, data = setup
    tr = hat_trace(kv, cfg, data, 1e12, np.ones(data.total))
    assert tr == pytest.approx(cfg.deriv, abs=1e-3)


def test_hat_trace_matches_dense_oracle(setup, rng):
    import mpmath as mp

    kv, cfg, data = setup
    w = rng.uniform(0.5, 2.0, data.total)
    B = design_matrix(kv, data).toarray()
    om = data.obs_weights
    A = B.T @ (B * (om * w)[:, None])
    M = A + 1.0 * penalty_matrix(cfg)
    # high-precision dense solve so the oracle itself is not the noise floor
    with mp.workdps(50):
        Mmp = mp.matrix(M.tolist())
        Amp = mp.matrix(A.tolist())
        dense = float(sum((Mmp**-1 * Amp)[i, i] for i in range(kv.dim)))
    assert hat_trace(kv, cfg, data, 1.0, w) == pytest.approx(dense, abs=1e-10)


def test_edf_within_bounds(setup):
    kv, cfg, data = setup
    for lam in [0.0, 1e-4, 1e-1, 1e3]:
        fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=HuberLoss()))
        assert cfg.deriv - 1e-6 <= fit.edf <= kv.dim + 1e-6


def test_hat_trace_rank_deficient_design():
    # more basis functions than distinct times: A singular, A + lam P not
    kv = make_knots(4, 10)
    cfg = PenaltyConfig(kv, 2)
    times = np.tile(np.linspace(0.05, 0.95, 10), 4)
    data = LongData(np.repeat(np.arange(4), 10), times, np.sin(times))
    tr = hat_trace(kv, cfg, data, 1e-2, np.ones(40))
    assert 0.0 < tr < 10.0 + 1e-9


# ------------------------------------------------------------------ objective


def test_objective_zero_for_interpolant():
    kv = make_knots(4, 4)
    ts = np.linspace(0.05, 0.95, kv.dim)
    data = LongData(np.ones(kv.dim), ts, np.cos(ts))
    B = design_matrix(kv, data).toarray()
    coef = np.linalg.solve(B, data.values)
    val = evaluate_objective(kv, None, data, SplineFunction(kv, coef), 0.0, SquareLoss())
    assert val == pytest.approx(0.0, abs=1e-20)


def test_objective_of_zero_function(setup):
    kv, cfg, data = setup
    zero = SplineFunction(kv, np.zeros(kv.dim))
    val = evaluate_objective(kv, cfg, data, zero, 3.7, SquareLoss())
    expected = float(np.sum(data.obs_weights * data.values**2))
    assert val == pytest.approx(expected, rel=1e-14)


def test_objective_matches_independent_summation(setup, rng):
    kv, cfg, data = setup
    coef = rng.standard_normal(kv.dim)
    spline = SplineFunction(kv, coef)
    lam = 0.37
    loss = HuberLoss(k=0.8)
    # independent route: per-subject double loop plus adaptive quadrature
    total = 0.0
    for sid, count in zip(data.subject_ids, data.counts):
        mask = data.subjects == sid
        resid = data.values[mask] - np.array([spline(float(t)) for t in data.times[mask]])
        total += float(np.sum(loss.rho(resid))) / (data.n_subjects * count)
    roughness = sum(
        quad(lambda t: spline(t, deriv=cfg.deriv) ** 2, lo, hi, epsabs=1e-12)[0]
        for lo, hi in zip(kv.span_breakpoints()[:-1], kv.span_breakpoints()[1:])
    )
    expected = total + lam * roughness
    got = evaluate_objective(kv, cfg, data, spline, lam, loss)
    assert got == pytest.approx(expected, abs=1e-8)


# ----------------------------------------------------------------- invariants


@pytest.mark.parametrize("loss", [SquareLoss(), AbsoluteLoss(), HuberLoss()])
def test_monotone_descent_of_smoothed_objective(loss, rng):
    kv = make_knots(4, 6)
    cfg = PenaltyConfig(kv, 2)
    data = random_long_data(rng, n_subjects=15, m_low=6, m_high=12, noise=0.8)
    sys_ = _System(kv, cfg, data)
    lam = 1e-4
    record = []
    sys_.irls(loss, lam, 60, 1e-12, record=record)
    values = [_smoothed_objective(sys_, loss, lam, c) for c in record]
    for prev, cur in zip(values, values[1:]):
        assert cur <= prev + 1e-10


@pytest.mark.parametrize("loss", [SquareLoss(), AbsoluteLoss(), HuberLoss()])
def test_stationarity_at_convergence(loss, rng):
    kv = make_knots(4, 6)
    cfg = PenaltyConfig(kv, 2)
    data = random_long_data(rng, n_subjects=15, m_low=6, m_high=12)
    lam = 1e-3
    fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=loss, max_iterations=500))
    assert fit.converged
    coef = fit.spline.coefficients
    sys_ = _System(kv, cfg, data)
    w = loss.irls_weight(sys_.y - sys_.fitted(coef))
    rhs = sys_._band_and_rhs(w)[1]
    grad = -2.0 * (rhs - sys_.normal_matrix(w) @ coef) + 2.0 * lam * (sys_.P @ coef)
    assert np.linalg.norm(grad) < 1e-6 * (1.0 + np.linalg.norm(coef))


def test_penalty_term_monotone_in_lambda(rng):
    kv = make_knots(4, 8)
    cfg = PenaltyConfig(kv, 2)
    P = penalty_matrix(cfg)
    for loss in (SquareLoss(), HuberLoss()):
        data = random_long_data(rng, n_subjects=18, m_low=6, m_high=10, noise=0.6)
        lams = np.logspace(-7, 1, 12)
        rough = []
        for lam in lams:
            fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=loss))
            c = fit.spline.coefficients
            rough.append(c @ P @ c)
        for prev, cur in zip(rough, rough[1:]):
            assert cur <= prev * (1 + 1e-10) + 1e-12


def test_minimizer_is_local_minimum_under_perturbation(rng):
    kv = make_knots(4, 6)
    cfg = PenaltyConfig(kv, 2)
    data = random_long_data(rng, n_subjects=15, m_low=6, m_high=12)
    lam = 1e-3
    loss = AbsoluteLoss()
    fit = fit_penalized(kv, cfg, data, lam, SolverConfig(loss=loss, max_iterations=500))
    sys_ = _System(kv, cfg, data)
    base = _smoothed_objective(sys_, loss, lam, fit.spline.coefficients)
    for _ in range(50):
        direction = rng.standard_normal(kv.dim)
        direction *= 1e-3 / np.linalg.norm(direction)
        perturbed = _smoothed_objective(sys_, loss, lam, fit.spline.coefficients + direction)
        assert perturbed >= base - 1e-12 * (1.0 + abs(base))


# --------------------------------------------------------------------- errors


def test_unpenalized_fit_requires_existence():
    kv = make_knots(4, 10)
    cfg = PenaltyConfig(kv, 2)
    clustered = LongData(
        np.repeat([1, 2, 3], 12),
        np.tile(np.linspace(0.0, 0.08, 12), 3),
        np.zeros(36),
    )
    with pytest.raises(SingularSystem) as err:
        fit_penalized(kv, cfg, clustered, 0.0, SolverConfig(loss=SquareLoss()))
    assert err.value.failed_index is not None
    # a positive penalty regularizes the same design
    fit = fit_penalized(kv, cfg, clustered, 1e-3, SolverConfig(loss=SquareLoss()))
    assert fit.converged


def test_pigeonhole_rejected():
    kv = make_knots(4, 10)
    cfg = PenaltyConfig(kv, 2)
    data = LongData([1, 1, 2], [0.2, 0.5, 0.8], [1.0, 2.0, 3.0])
    with pytest.raises(SingularSystem):
        fit_penalized(kv, cfg, data, 1e-3, SolverConfig(loss=SquareLoss()))


def test_penalty_required_for_positive_lambda(setup):
    kv, _, data = setup
    with pytest.raises(ValueError):
        fit_penalized(kv, None, data, 1e-3, SolverConfig(loss=SquareLoss()))
    with pytest.raises(ValueError):
        fit_penalized(kv, PenaltyConfig(kv, 2), data, -1.0, SolverConfig(loss=SquareLoss()))
