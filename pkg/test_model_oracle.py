"""
Tests for inexact models, subproblem solvers and the precision conversion.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.bregman_core import SquaredEuclidean
from services.model_oracle import (
    EntropicLinearSolver, EuclideanProjectionSolver, InexactModel, PrecisionConversion, SubproblemSolver,
    entropic_model, precision_from_residual, solve_entropic_linear_subproblem, variational_residual, verify_model,
)
from utils.errors import InvalidInputError


def test_entropic_subproblem_closed_form():
    g = np.array([1.0, -2.0, 0.5])
    y = np.array([0.2, 0.3, 0.5])
    x = solve_entropic_linear_subproblem(g, y, 2.0)
    expected = y * np.exp(-g / 2.0)
    assert_allclose(x, expected / expected.sum(), rtol=1e-12)


def test_entropic_subproblem_rejects_zero_anchor():
    with pytest.raises(InvalidInputError):
        solve_entropic_linear_subproblem([1.0, 2.0], [1.0, 0.0], 1.0)
    with pytest.raises(InvalidInputError):
        solve_entropic_linear_subproblem([1.0, 2.0], [0.5, 0.5], 0.0)


def test_entropic_model_passes_sandwich_check():
    model = entropic_model([1.0, 2.0, 3.0, 4.0])
    report = verify_model(model, model.objective, [], sampler=lambda rng: rng.dirichlet(np.ones(4)),
                          n_random=200, seed=7, slack=1e-12)
    assert report.consistent
    assert report.samples == 200


def test_sandwich_check_flags_small_lipschitz():
    """f = ||x||^2 needs L = 2 with V = ||x - y||^2 / 2."""
    model = InexactModel.from_gradient(
        objective=lambda x: float(np.dot(x, x)),
        gradient=lambda y: 2.0 * y,
        bregman=SquaredEuclidean(),
        lipschitz=1.0,
    )
    pairs = [(np.array([1.0, 0.0]), np.array([0.0, 0.0])), (np.array([0.5, 0.5]), np.array([0.0, 1.0]))]
    report = verify_model(model, model.objective, pairs)
    assert not report.consistent
    assert report.max_upper_gap == pytest.approx(0.5)

    exact = model.with_lipschitz(2.0)
    assert verify_model(exact, exact.objective, pairs, slack=1e-12).consistent


def test_verify_model_rejects_out_of_domain_pairs():
    model = entropic_model([1.0, 2.0])
    with pytest.raises(InvalidInputError):
        verify_model(model, model.objective, [(np.array([2.0, 0.0]), np.array([0.5, 0.5]))])


def test_model_validation():
    with pytest.raises(InvalidInputError):
        entropic_model([1.0], lipschitz=0.0)
    with pytest.raises(InvalidInputError):
        InexactModel(lambda x, y: 0.0, delta=-1.0, lipschitz=1.0, bregman=SquaredEuclidean())


def test_projection_solver_stays_in_ball():
    model = InexactModel.from_gradient(lambda x: float(np.dot(x, x)), lambda y: 2.0 * y - 10.0,
                                       SquaredEuclidean('ball', 1.0), lipschitz=2.0)
    solution = EuclideanProjectionSolver().solve(model, np.zeros(3), 1.0)
    assert np.linalg.norm(solution.point) == pytest.approx(1.0)
    assert solution.delta_tilde == 0.0


def test_entropic_solver_needs_linear_part():
    model = InexactModel(lambda x, y: 0.0, delta=0.0, lipschitz=1.0, bregman=SquaredEuclidean())
    with pytest.raises(InvalidInputError):
        EntropicLinearSolver().solve(model, np.array([0.5, 0.5]), 1.0)


def test_precision_from_residual_branches():
    flat = PrecisionConversion(smooth_lipschitz=2.0, diameter=3.0)
    assert precision_from_residual(flat, 0.25) == pytest.approx(3.0, abs=1e-12)
    steep = PrecisionConversion(smooth_lipschitz=2.0, diameter=1.0, grad_norm_at_opt=1.0, strong_convexity=0.5)
    assert precision_from_residual(steep, 0.25) == pytest.approx(3.0, abs=1e-12)
    assert precision_from_residual(steep, 0.0) == 0.0


def test_precision_conversion_needs_strong_convexity_with_gradient():
    with pytest.raises(InvalidInputError):
        PrecisionConversion(smooth_lipschitz=1.0, diameter=1.0, grad_norm_at_opt=1.0)
    with pytest.raises(InvalidInputError):
        precision_from_residual(PrecisionConversion(1.0, 1.0), -1.0)


@pytest.mark.parametrize('t', [1e-6, 1e-3, 0.1, 0.5, 1.0])
def test_measured_precision_within_certified_bound(t):
    """phi(x) = (x - 2)^2 on [0, 1]: minimizer 1 with phi'(1) = -2."""
    def phi(x):
        return (x - 2.0) ** 2

    x_star, x_tilde = 1.0, 1.0 - t
    residual = phi(x_tilde) - phi(x_star)
    measured = variational_residual(np.array([2.0 * (x_tilde - 2.0)]), np.array([x_tilde]), np.array([x_star]))
    conversion = PrecisionConversion(smooth_lipschitz=2.0, diameter=1.0, grad_norm_at_opt=2.0, strong_convexity=2.0)
    certified = precision_from_residual(conversion, residual)
    assert measured == pytest.approx(2.0 * t * (1.0 + t))
    assert measured <= certified
    assert certified == pytest.approx(4.0 * math.sqrt(residual))


def test_variational_residual_is_clamped():
    assert variational_residual(np.array([1.0]), np.array([0.0]), np.array([1.0])) == 0.0


def test_certified_precision_over_random_inexact_solutions():
    rng = np.random.default_rng(42)
    conversion = PrecisionConversion(smooth_lipschitz=2.0, diameter=1.0, grad_norm_at_opt=2.0, strong_convexity=2.0)
    for x_tilde in rng.uniform(0.0, 1.0, size=1000):
        residual = (x_tilde - 2.0) ** 2 - 1.0
        measured = variational_residual(np.array([2.0 * (x_tilde - 2.0)]), np.array([x_tilde]), np.array([1.0]))
        assert measured <= precision_from_residual(conversion, residual) + 1e-12


def test_solver_base_class_is_abstract():
    with pytest.raises(TypeError):
        SubproblemSolver()

    class Incomplete(SubproblemSolver):
        pass

    with pytest.raises(TypeError):
        Incomplete()
    assert isinstance(EntropicLinearSolver(), SubproblemSolver)
