import numpy as np
import pytest
from numpy.testing import assert_allclose

from linmap import (
    build_composed_linear_problem,
    check_gradient_range,
    check_strong_convexity_range,
    composed_linear_step_comparison,
    null_space_component,
    pl_constant_from_composition,
    projected_distance,
    run_sgd_thm2,
    step_size_theorem2,
    theorem2_loss_bound_curve,
    theorem2_rate_factor,
)
from numerics import matrix_with_spectrum
from sgd import SgdConfig, run_sgd, statistical_bound_check
from utils.errors import InvalidInputError, NonContractiveError


def unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def square_problem(rng, k: int = 5, n: int = 8):
    a = matrix_with_spectrum(k, k, np.linspace(2.0, 0.5, k), rng)
    return build_composed_linear_problem(a, rng.standard_normal((n, k)), unit(rng.standard_normal(k)))


def theorem2_config(p, m: int, steps: int, runs: int, seed: int = 0) -> SgdConfig:
    eta = step_size_theorem2(p.tilde_beta, p.tilde_lambda, p.factorization.sigma_max, m)
    return SgdConfig(m=m, eta=eta, steps=steps, runs=runs, seed=seed, eta_rule="theorem2")


def test_pl_constant_from_composition_examples():
    assert pl_constant_from_composition(1.0, 1.0) == pytest.approx(1.0)
    assert pl_constant_from_composition(2.0, 0.5) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        pl_constant_from_composition(1.0, 0.0)


def test_step_size_theorem2_examples():
    assert step_size_theorem2(1.0, 1.0, 1.0, 1) == pytest.approx(1.0)
    assert step_size_theorem2(2.0, 1.0, 2.0, 1) == pytest.approx(0.125)
    assert step_size_theorem2(1.0, 1.0, 1.0, 4) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        step_size_theorem2(1.0, 1.0, 0.0, 1)
    with pytest.raises(InvalidInputError):
        step_size_theorem2(1.0, 1.0, 1.0, 0)


def test_theorem2_rate_factor_examples():
    assert theorem2_rate_factor(1.0, 1.0, 0.5) == pytest.approx(0.5)
    assert theorem2_rate_factor(2.0, 0.5, 1.0) == pytest.approx(0.5)
    assert theorem2_rate_factor(1.0, 1.0, 1e-12) == pytest.approx(1.0)
    with pytest.raises(NonContractiveError):
        theorem2_rate_factor(1.0, 1.0, 1.0)
    with pytest.raises(NonContractiveError):
        theorem2_rate_factor(1.0, 1.0, 0.0)


def test_theorem2_loss_bound_curve():
    curve = theorem2_loss_bound_curve(2.0, 3.0, 0.5, 0.5, 3)
    assert_allclose(curve, 4.5 * np.array([1.0, 0.5, 0.25, 0.125]))


def test_build_rejects_degenerate_inputs(rng):
    with pytest.raises(InvalidInputError):
        build_composed_linear_problem(np.zeros((3, 4)), rng.standard_normal((5, 3)), np.ones(4))
    with pytest.raises(InvalidInputError):
        build_composed_linear_problem(rng.standard_normal((3, 4)), np.tile([1.0, 0.0, 0.0], (5, 1)), np.ones(4))


def test_composed_constants_match_generator(composed_rank8):
    p = composed_rank8.linmap
    f = p.factorization
    assert f.rank == 8
    assert composed_rank8.constants.alpha == pytest.approx(pl_constant_from_composition(p.tilde_alpha, f.sigma_min_nonzero))
    assert composed_rank8.constants.lam == pytest.approx(f.sigma_max ** 2 * p.tilde_lambda)
    assert_allclose(composed_rank8.objective.sample_betas, f.sigma_max ** 2 * np.array([loss.beta for loss in p.tilde_losses]))


def test_identity_map_reduces_to_strongly_convex(rng):
    k = 4
    p = build_composed_linear_problem(np.eye(k), rng.standard_normal((6, k)), rng.standard_normal(k))
    assert p.factorization.sigma_min_nonzero == pytest.approx(1.0)
    assert step_size_theorem2(p.tilde_beta, p.tilde_lambda, 1.0, 2) == pytest.approx(2 / (p.tilde_beta + p.tilde_lambda))
    assert pl_constant_from_composition(p.tilde_alpha, 1.0) == pytest.approx(p.tilde_alpha)


def test_projected_distance_at_minimizer_is_zero(composed_rank8):
    p = composed_rank8.linmap
    result = run_sgd_thm2(p, p.w_star, theorem2_config(p, 2, 20, 2))
    assert np.max(result.distances) <= 1e-24
    assert np.max(np.abs(result.trajectory.final_params - p.w_star)) <= 1e-12


def test_projected_distance_full_rank_square(rng):
    p = square_problem(rng)
    w = rng.standard_normal(5)
    assert projected_distance(p, w) == pytest.approx(float((w - p.w_star) @ (w - p.w_star)), rel=1e-10)

    w0 = p.w_star + unit(rng.standard_normal(5))
    result = run_sgd_thm2(p, w0, theorem2_config(p, 1, 10, 3))
    final = result.trajectory.final_params
    assert_allclose(result.distances[:, -1], np.sum((final - p.w_star) ** 2, axis=1), rtol=1e-10)


def test_null_space_component_is_invariant(composed_rank8, rng):
    p = composed_rank8.linmap
    w0 = p.w_star + unit(rng.standard_normal(composed_rank8.dim))
    traj = run_sgd(p.objective, w0, theorem2_config(p, 3, 50, 4))
    start = null_space_component(p, w0)
    for final in traj.final_params:
        assert_allclose(null_space_component(p, final), start, atol=1e-10)


def test_distance_ignores_null_space(composed_rank8, rng):
    p = composed_rank8.linmap
    null = p.factorization.null_basis() @ rng.standard_normal(composed_rank8.dim - 8)
    w = rng.standard_normal(composed_rank8.dim)
    assert projected_distance(p, w + null) == pytest.approx(projected_distance(p, w), rel=1e-9)
    assert p.objective.value(w + null) == pytest.approx(p.objective.value(w), rel=1e-9)


def test_gradient_range(composed_rank8, rng):
    assert check_gradient_range(composed_rank8.linmap, rng.standard_normal((50, composed_rank8.dim)))["passed"]


def test_strong_convexity_equal_points(composed_rank8, rng):
    z = rng.standard_normal(composed_rank8.dim)
    report = check_strong_convexity_range(composed_rank8.linmap, [(z, z)])
    assert report["passed"]
    assert report["worst_gap"] == pytest.approx(0.0, abs=1e-12)


def test_strong_convexity_saturates_along_least_singular_direction(rng):
    k = 5
    a = matrix_with_spectrum(k, k, np.linspace(2.0, 0.5, k), rng)
    p = build_composed_linear_problem(a, np.eye(k), unit(rng.standard_normal(k)))
    assert p.tilde_alpha == pytest.approx(1.0 / k)
    v_min = p.factorization.v[:, -1]
    report = check_strong_convexity_range(p, [(p.w_star + 2.0 * v_min, p.w_star), (p.w_star - v_min, p.w_star + v_min)])
    assert report["passed"]
    assert report["tightest_curvature"] == pytest.approx(report["modulus"], rel=1e-9)
    assert report["modulus"] == pytest.approx(0.25 / k)


def test_strong_convexity_random_pairs(composed_rank8, rng):
    pairs = rng.standard_normal((1000, 2, composed_rank8.dim)) * 2
    report = check_strong_convexity_range(composed_rank8.linmap, pairs)
    assert report["passed"], report
    assert report["checked"] == 1000
    assert report["tightest_curvature"] >= report["modulus"] * (1 - 1e-9)


def test_step_comparison_reports_ratio(composed_rank8):
    c = composed_rank8.constants
    table = composed_linear_step_comparison(composed_rank8.linmap, c.alpha, c.beta, c.lam, 4)
    assert table["ratio"] == pytest.approx(table["eta_theorem2"] / table["eta_theorem1_pl"])
    assert table["ratio"] > 1.0


def test_loss_bound_holds_pointwise(composed_rank8, rng):
    p = composed_rank8.linmap
    result = run_sgd_thm2(p, unit(rng.standard_normal(composed_rank8.dim)), theorem2_config(p, 2, 60, 5, seed=9))
    assert result.loss_bound_passed
    assert result.worst_loss_excess <= 1e-10
    assert result.distance_bound[0] == result.distances[0, 0]


@pytest.mark.slow
@pytest.mark.parametrize("m", [1, 4])
def test_projected_contraction(composed_rank8, m):
    p = composed_rank8.linmap
    w0 = unit(np.random.default_rng(m).standard_normal(composed_rank8.dim))
    result = run_sgd_thm2(p, w0, theorem2_config(p, m, 300, 200, seed=m))
    report = statistical_bound_check(result.mean_distance, result.std_err_distance, result.distance_bound)
    assert report["passed"], report
    assert result.loss_bound_passed
    assert result.mean_distance[-1] < result.mean_distance[0]
