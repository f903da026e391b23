import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from objective import ErmObjective, QuadraticLoss, scalar_quadratic_loss
from sgd import (
    ON_DIVERGENCE_RECORD,
    SgdConfig,
    contraction_factor,
    gd_rate_factor,
    run_gd,
    run_sgd,
    statistical_bound_check,
    step_size_quadratic_opt,
    step_size_theorem1,
    theoretical_bound_curve,
)
from utils.errors import DivergenceError, InvalidInputError, PreconditionViolationError


def unit_start(dim: int, seed: int = 0) -> np.ndarray:
    w = np.random.default_rng(seed).standard_normal(dim)
    return w / np.linalg.norm(w)


def test_step_size_theorem1_examples():
    assert step_size_theorem1(1.0, 1.0, 1.0, 1) == pytest.approx(1.0)
    assert step_size_theorem1(1.0, 1.0, 1.0, 3) == pytest.approx(1.0)
    assert step_size_theorem1(0.5, 2.0, 1.0, 1) == pytest.approx(0.25)
    with pytest.raises(InvalidInputError):
        step_size_theorem1(0.0, 1.0, 1.0, 1)
    with pytest.raises(InvalidInputError):
        step_size_theorem1(1.0, 1.0, 1.0, 0)


def test_step_size_quadratic_opt_examples():
    assert step_size_quadratic_opt(1.0, 1.0, 1.0, 1) == pytest.approx(0.5)
    assert step_size_quadratic_opt(1.0, 1.0, 1.0, 3) == pytest.approx(0.75)
    for alpha, beta, lam in ((0.3, 2.0, 1.5), (1.0, 4.0, 0.7)):
        assert step_size_quadratic_opt(alpha, beta, lam, 1) == pytest.approx(alpha / (2 * lam * beta))
    with pytest.raises(InvalidInputError):
        step_size_quadratic_opt(1.0, -1.0, 1.0, 2)


def test_contraction_factor_examples():
    assert contraction_factor(0.0, 1.0, 1.0, 1.0, 1) == 1.0
    assert contraction_factor(0.5, 1.0, 1.0, 1.0, 1) == pytest.approx(0.75)
    with pytest.raises(PreconditionViolationError):
        contraction_factor(2.5, 1.0, 1.0, 1.0, 1)


def test_printed_step_gives_unit_factor_at_m1(ls_small):
    c = ls_small.constants
    eta = step_size_theorem1(c.alpha, c.beta, c.lam, 1)
    if eta <= 2.0 / c.lam:
        assert contraction_factor(eta, c.alpha, c.beta, c.lam, 1) == pytest.approx(1.0, abs=1e-12)
    assert contraction_factor(1.0, 1.0, 1.0, 1.0, 1) == pytest.approx(1.0)


def test_quadratic_opt_factor_identity():
    rng = np.random.default_rng(17)
    for _ in range(100):
        lam = rng.uniform(0.1, 10.0)
        alpha = rng.uniform(0.01, 2.0) * lam
        beta = max(lam, alpha / 2) * rng.uniform(1.0, 5.0)
        m = int(rng.integers(1, 64))
        eta = step_size_quadratic_opt(alpha, beta, lam, m)
        assert eta <= 2.0 / lam
        assert contraction_factor(eta, alpha, beta, lam, m) == pytest.approx(1.0 - alpha * eta / 2, abs=2e-15)


def test_formulas_monotone_in_batch_size():
    alpha, beta, lam = 0.4, 3.0, 1.2
    sizes = [1, 2, 4, 8, 16, 64]
    printed = [step_size_theorem1(alpha, beta, lam, m) for m in sizes]
    optimal = [step_size_quadratic_opt(alpha, beta, lam, m) for m in sizes]
    rates = [1 - alpha * eta / 2 for eta in optimal]
    assert all(a <= b for a, b in zip(printed, printed[1:]))
    assert all(a <= b for a, b in zip(optimal, optimal[1:]))
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_theoretical_bound_curve_examples():
    assert_allclose(theoretical_bound_curve(3.0, 1.0, 4), [3.0] * 5)
    assert theoretical_bound_curve(8.0, 0.5, 3)[3] == pytest.approx(1.0)
    alpha, beta, lam, m = 1.0, 1.0, 1.0, 2
    eta = step_size_quadratic_opt(alpha, beta, lam, m)
    curve = theoretical_bound_curve(2.0, contraction_factor(eta, alpha, beta, lam, m), 10)
    assert_allclose(curve, 2.0 * (1 - alpha * eta / 2) ** np.arange(11), rtol=1e-13)
    with pytest.raises(InvalidInputError):
        theoretical_bound_curve(1.0, 1.2, 3)
    with pytest.raises(InvalidInputError):
        theoretical_bound_curve(1.0, -0.1, 3)


def test_sgd_config_validation():
    with pytest.raises(InvalidInputError):
        SgdConfig(m=0, eta=0.1, steps=10)
    with pytest.raises(InvalidInputError):
        SgdConfig(m=1, eta=np.inf, steps=10)
    with pytest.raises(InvalidInputError):
        SgdConfig(m=1, eta=0.1, steps=10, runs=0)
    with pytest.raises(InvalidInputError):
        SgdConfig(m=1, eta=0.1, steps=10, eta_rule="adaptive")


def test_run_sgd_zero_step_keeps_loss(ls_small):
    w0 = unit_start(ls_small.dim)
    traj = run_sgd(ls_small.objective, w0, SgdConfig(m=2, eta=0.0, steps=5, runs=3))
    assert_allclose(traj.losses, ls_small.objective.value(w0))
    assert_array_equal(traj.final_params, np.tile(w0, (3, 1)))


def test_run_sgd_fixed_point(ls_small):
    traj = run_sgd(ls_small.objective, ls_small.w_star, SgdConfig(m=4, eta=0.1, steps=50, runs=2))
    assert np.max(np.abs(traj.final_params - ls_small.w_star)) <= 1e-10


def test_run_sgd_scalar_quadratic_one_step():
    beta, center = 2.5, 3.0
    obj = ErmObjective([scalar_quadratic_loss(beta, center)])
    traj = run_sgd(obj, [0.0], SgdConfig(m=1, eta=1.0 / beta, steps=1))
    assert traj.final_params[0, 0] == pytest.approx(center)
    assert traj.losses[0, 1] == pytest.approx(0.0, abs=1e-24)


def test_run_sgd_trajectory_shape_and_aggregates(ls_small):
    w0 = unit_start(ls_small.dim)
    c = ls_small.constants
    eta = step_size_quadratic_opt(c.alpha, c.beta, c.lam, 2)
    factor = contraction_factor(eta, c.alpha, c.beta, c.lam, 2)
    traj = run_sgd(ls_small.objective, w0, SgdConfig(m=2, eta=eta, steps=20, runs=5, seed=3), bound_factor=factor)
    assert traj.losses.shape == (5, 21)
    assert traj.runs == 5 and traj.steps == 20
    assert_allclose(traj.losses[:, 0], ls_small.objective.value(w0))
    assert traj.bound[0] == traj.losses[0, 0]
    assert_allclose(traj.mean_loss, traj.losses.mean(axis=0), rtol=1e-12)
    assert np.all(traj.std_err >= 0)
    assert np.all(traj.losses >= 0)


def test_run_sgd_deterministic(ls_small):
    w0 = unit_start(ls_small.dim)
    config = SgdConfig(m=3, eta=0.05, steps=30, runs=4, seed=11)
    first = run_sgd(ls_small.objective, w0, config)
    second = run_sgd(ls_small.objective, w0, config)
    assert_array_equal(first.losses, second.losses)
    assert_array_equal(first.final_params, second.final_params)

    other_seed = run_sgd(ls_small.objective, w0, SgdConfig(m=3, eta=0.05, steps=30, runs=4, seed=12))
    assert not np.array_equal(first.losses, other_seed.losses)


def test_run_sgd_parallel_matches_serial(ls_small):
    w0 = unit_start(ls_small.dim)
    serial = run_sgd(ls_small.objective, w0, SgdConfig(m=2, eta=0.05, steps=25, runs=6, seed=5))
    parallel = run_sgd(ls_small.objective, w0, SgdConfig(m=2, eta=0.05, steps=25, runs=6, seed=5, workers=3))
    assert_array_equal(serial.losses, parallel.losses)
    assert_array_equal(serial.mean_loss, parallel.mean_loss)
    assert_array_equal(serial.std_err, parallel.std_err)


def test_run_sgd_track_records_quantity(ls_small):
    w0 = unit_start(ls_small.dim)
    traj = run_sgd(
        ls_small.objective, w0, SgdConfig(m=1, eta=0.05, steps=10, runs=2),
        track=lambda w: float(np.linalg.norm(w - ls_small.w_star)),
    )
    assert traj.tracked.shape == (2, 11)
    assert traj.tracked[0, 0] == pytest.approx(np.linalg.norm(w0 - ls_small.w_star))


def test_run_sgd_divergence():
    obj = ErmObjective([scalar_quadratic_loss(1.0, 0.0)])
    with pytest.raises(DivergenceError) as excinfo:
        run_sgd(obj, [1.0], SgdConfig(m=1, eta=10.0, steps=50, runs=2))
    assert excinfo.value.run == 0
    assert excinfo.value.step == 7

    traj = run_sgd(obj, [1.0], SgdConfig(m=1, eta=10.0, steps=50, runs=2), on_divergence=ON_DIVERGENCE_RECORD)
    assert traj.diverged == {0: 7, 1: 7}
    assert traj.alive_runs() == []
    assert np.all(np.isnan(traj.mean_loss))


def test_run_gd_examples():
    lam0 = 3.0
    obj = ErmObjective([QuadraticLoss(np.array([[lam0]]), np.zeros(1))])
    curve = run_gd(obj, [2.0], 1.0 / lam0, 3)
    assert curve[0] == pytest.approx(6.0)
    assert_allclose(curve[1:], 0.0, atol=1e-24)

    assert_allclose(run_gd(obj, [2.0], 0.0, 4), 6.0)

    with pytest.raises(DivergenceError):
        run_gd(obj, [2.0], 10.0, 50)


def test_run_gd_least_squares_rate(ls_small):
    c = ls_small.constants
    curve = run_gd(ls_small.objective, unit_start(ls_small.dim), 1.0 / c.lam, 100)
    ratios = curve[1:] / curve[:-1]
    live = curve[:-1] > 1e-20
    assert np.all(ratios[live] <= gd_rate_factor(c.alpha, c.lam) + 1e-10)


def test_statistical_bound_check():
    bound = np.array([1.0, 0.5, 0.25])
    report = statistical_bound_check(np.array([1.0, 0.4, 0.2]), np.zeros(3), bound)
    assert report["passed"] and report["first_violation"] is None

    report = statistical_bound_check(np.array([1.0, 0.6, 0.2]), np.zeros(3), bound)
    assert not report["passed"]
    assert report["first_violation"] == 1

    report = statistical_bound_check(np.array([1.0, 0.6, 0.2]), np.array([0.0, 0.1, 0.0]), bound)
    assert report["passed"]


@pytest.mark.slow
@pytest.mark.parametrize("m", [1, 4, 16])
def test_multi_step_bound_least_squares(ls_small, m):
    c = ls_small.constants
    eta = step_size_quadratic_opt(c.alpha, c.beta, c.lam, m)
    factor = contraction_factor(eta, c.alpha, c.beta, c.lam, m)
    traj = run_sgd(ls_small.objective, unit_start(ls_small.dim, seed=m), SgdConfig(m=m, eta=eta, steps=200, runs=200, seed=m),
                   bound_factor=factor)
    report = statistical_bound_check(traj.mean_loss, traj.std_err, traj.bound)
    assert report["passed"], report
    assert traj.mean_loss[-1] < traj.mean_loss[0]
