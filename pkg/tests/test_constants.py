import numpy as np
import pytest

from constants import (
    SOURCE_ESTIMATED,
    ConstantsReport,
    analytic_constants_least_squares,
    estimate_constants,
    estimate_pl_constant,
    estimate_smoothness,
    pl_ratio_scan,
    standard_probes,
    verify_pl,
)
from numerics import svd
from objective import ErmObjective, QuadraticLoss
from problems import gen_composed_linear_transform, gen_interpolated_least_squares
from utils.errors import InsufficientProbesError, InvalidInputError, NotInterpolatedError


def centered_quadratic(lam0: float, dim: int = 3) -> ErmObjective:
    """L(w) = 1/2 lam0 ||w||^2: отношение ||grad||^2 / L равно 2 lam0 всюду."""
    return ErmObjective([QuadraticLoss(lam0 * np.eye(dim), np.zeros(dim))])


def test_estimate_pl_constant_constant_ratio(rng):
    obj = centered_quadratic(2.0)
    assert estimate_pl_constant(obj, rng.standard_normal((100, 3)), 0.0) == pytest.approx(4.0, rel=1e-12)


def test_estimate_pl_constant_all_probes_at_minimizer():
    obj = centered_quadratic(2.0)
    with pytest.raises(InsufficientProbesError):
        estimate_pl_constant(obj, np.zeros((5, 3)), 0.0)


def test_estimate_pl_constant_monotone_in_probes(ls_small):
    probes = standard_probes(ls_small.w_star, 400, seed=1)
    estimates = [estimate_pl_constant(ls_small.objective, probes[:k], 0.0) for k in (50, 100, 200, 400)]
    assert all(a >= b for a, b in zip(estimates, estimates[1:]))


def test_analytic_constants_identity():
    report = analytic_constants_least_squares(svd(np.eye(2)), [1.0, -1.0])
    assert report.lam == pytest.approx(0.5)
    assert report.alpha == pytest.approx(1.0)
    assert report.beta == pytest.approx(1.0)
    assert report.alpha_source == "analytic"


def test_analytic_constants_zero_singular_value():
    x = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    report = analytic_constants_least_squares(svd(x))
    sigma = np.linalg.norm(x, 2)
    assert report.alpha == pytest.approx(2 * sigma ** 2 / 3)
    assert report.lam == pytest.approx(sigma ** 2 / 3)


def test_analytic_constants_not_interpolated():
    x = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(NotInterpolatedError):
        analytic_constants_least_squares(svd(x), [1.0, 0.0])


def test_analytic_alpha_below_probe_estimate():
    inst = gen_interpolated_least_squares(10, 40, seed=4)
    estimate = estimate_pl_constant(inst.objective, inst.probes(), 0.0)
    assert estimate >= inst.constants.alpha - 1e-9


def test_estimate_smoothness_quadratic():
    obj = ErmObjective([QuadraticLoss(np.diag([3.0, 1.0]), np.zeros(2))])
    assert estimate_smoothness(obj, [np.array([1.0, 1.0])], iters=300) == pytest.approx(3.0, abs=1e-3)


def test_estimate_smoothness_least_squares(ls_small):
    estimate = estimate_smoothness(ls_small.objective, ls_small.probes(count=5), iters=500)
    assert estimate == pytest.approx(ls_small.constants.lam, rel=1e-3)
    assert ls_small.constants.lam >= estimate * (1 - 1e-6)


def test_verify_pl_boundary(rng):
    obj = centered_quadratic(2.0)
    probes = rng.standard_normal((50, 3))
    assert verify_pl(obj, 4.0, probes, 0.0)["passed"]
    report = verify_pl(obj, 4.01, probes, 0.0)
    assert not report["passed"]
    assert report["failing_probe"] == 0
    assert verify_pl(obj, 1e-12, probes, 0.0)["passed"]


def test_verify_pl_least_squares(ls_small):
    report = verify_pl(ls_small.objective, ls_small.constants.alpha, ls_small.probes(), 0.0)
    assert report["passed"]
    assert report["checked"] >= 1000


def test_verify_pl_tight_along_least_singular_direction(ls_small):
    probes = ls_small.alignment_probes()
    ratios = [
        float(ls_small.objective.gradient(p) @ ls_small.objective.gradient(p)) / ls_small.objective.value(p)
        for p in probes
    ]
    np.testing.assert_allclose(ratios, ls_small.constants.alpha, rtol=1e-6)
    assert not verify_pl(ls_small.objective, ls_small.constants.alpha * (1 + 1e-6), probes, 0.0)["passed"]


def test_constants_report_invariants():
    with pytest.raises(InvalidInputError):
        ConstantsReport(alpha=3.0, beta=1.0, lam=1.0)
    with pytest.raises(InvalidInputError):
        ConstantsReport(alpha=0.0, beta=1.0, lam=1.0)
    report = ConstantsReport(alpha=2.0, beta=1.0, lam=1.0)
    assert report.as_dict()["lambda"] == 1.0


def test_standard_probes_deterministic():
    center = np.array([1.0, 0.0, 0.0])
    first = standard_probes(center, 40, seed=3)
    assert first.shape == (40, 3)
    np.testing.assert_array_equal(first, standard_probes(center, 40, seed=3))


def test_default_loss_floor_from_first_probe(ls_orthogonal):
    obj = ls_orthogonal.objective
    e = np.zeros(4)
    e[0] = 1.0
    probes = [ls_orthogonal.w_star + e, ls_orthogonal.w_star + 1e-8 * e]
    scan = pl_ratio_scan(obj, probes)
    assert scan["loss_floor"] == pytest.approx(1.25e-13)
    assert scan["qualifying"] == 1 and scan["total"] == 2
    assert pl_ratio_scan(obj, probes, 0.0)["qualifying"] == 2

    report = verify_pl(obj, 0.5, probes)
    assert report["passed"] and report["checked"] == 1
    assert estimate_pl_constant(obj, probes) == pytest.approx(0.5, rel=1e-12)


def test_estimate_constants_least_squares(ls_small):
    probes = ls_small.probes(count=200)
    report = estimate_constants(ls_small.objective, probes, loss_floor=0.0)
    assert report.alpha_source == report.beta_source == report.lam_source == SOURCE_ESTIMATED
    assert report.probe_count == len(probes)
    assert report.alpha == estimate_pl_constant(ls_small.objective, probes, 0.0)
    assert report.alpha >= ls_small.constants.alpha - 1e-9
    assert report.alpha_worst_probe.shape == (50,)

    obj = ls_small.objective
    worst = report.alpha_worst_probe
    grad = obj.gradient(worst)
    assert float(grad @ grad) / obj.value(worst) == pytest.approx(report.alpha, rel=1e-12)

    assert 0.5 * ls_small.constants.lam < report.lam <= ls_small.constants.lam * (1 + 1e-6)
    np.testing.assert_allclose(report.sample_betas, ls_small.constants.sample_betas, rtol=1e-6)
    assert report.beta == pytest.approx(ls_small.constants.beta, rel=1e-6)

    data = report.as_dict()
    assert data["alpha_source"] == SOURCE_ESTIMATED
    assert len(data["alpha_worst_probe"]) == 50


def test_estimate_constants_needs_probes_above_floor():
    obj = centered_quadratic(2.0)
    with pytest.raises(InsufficientProbesError):
        estimate_constants(obj, np.zeros((4, 3)), loss_floor=0.0)


@pytest.mark.slow
def test_analytic_smoothness_dominates_estimate(ls_small, composed_rank8):
    linear = gen_composed_linear_transform(ls_small, 0.5, seed=2)
    for inst in (ls_small, composed_rank8, linear):
        estimate = estimate_smoothness(inst.objective, inst.probes(count=100), iters=100)
        assert inst.constants.lam >= estimate * (1 - 1e-6), inst.kind
