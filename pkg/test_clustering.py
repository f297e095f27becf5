"""
Tests for the electoral clustering potential, its models and solvers.
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.bregman_core import ProductPoint
from services.clustering import (
    ClusteringProblem, ClusteringSubproblemSolver, build_model, clustering_model, make_g, potential,
    random_product_point, solve_clustering,
)
from services.gradient_methods import GMConfig
from services.model_oracle import verify_model
from utils.errors import InvalidInputError


def quadratic_problem(n=20, m=5, seed=42, mu1_factor=1.5, mu2_factor=2.5):
    rng = np.random.default_rng(seed)
    opinions = rng.uniform(0.0, 1.0, size=(n, m))
    g, grad, Lg = make_g('quadratic', n, m, opinions=opinions, scale=1.0)
    return ClusteringProblem(g, grad, Lg, mu1_factor * Lg, mu2_factor * Lg, n, m, name='quadratic')


def test_quadratic_g_lipschitz_constant():
    opinions = np.array([[1.0, 2.0], [0.0, 1.0]])
    g, grad, Lg = make_g('quadratic', 2, 2, opinions=opinions, scale=2.0)
    assert Lg == pytest.approx(2.0 * (1.0 + 5.0))
    z, p = np.array([0.5, 0.5]), np.array([1.0, 1.0])
    assert g(z, p) == pytest.approx(0.5 * 2.0 * ((1.0 - 0.5) ** 2 + (1.0 - 1.5) ** 2))
    gz, gp = grad(z, p)
    assert_allclose(gp, 2.0 * (p - opinions.T @ z))
    assert_allclose(gz, -opinions @ gp)


def test_make_g_rejects_unknown_and_misshaped():
    with pytest.raises(InvalidInputError):
        make_g('cubic', 2, 2)
    with pytest.raises(InvalidInputError):
        make_g('quadratic', 2, 2, opinions=np.ones((3, 2)))


def test_problem_requires_dominating_weights():
    g, grad, Lg = make_g('quadratic', 2, 2, opinions=np.ones((2, 2)))
    with pytest.raises(InvalidInputError):
        ClusteringProblem(g, grad, Lg, 0.5 * Lg, 2.0 * Lg, 2, 2)


def test_both_models_satisfy_sandwich_on_random_pairs():
    prob = quadratic_problem()
    sampler = lambda rng: random_product_point(rng, prob.n, prob.m)
    objective = lambda x: potential(prob, x)

    relative = build_model(prob)
    report = verify_model(relative, objective, [], sampler=sampler, n_random=10000, seed=1, slack=1e-9)
    assert report.consistent

    linear = build_model(prob, linear=True)
    assert linear.mu == pytest.approx(0.5 * prob.Lg)
    assert linear.lipschitz == pytest.approx(3.5 * prob.Lg)
    report = verify_model(linear, objective, [], sampler=sampler, n_random=10000, seed=2, slack=1e-9)
    assert report.consistent


def test_model_vanishes_on_diagonal():
    prob = quadratic_problem(n=4, m=2)
    x = random_product_point(np.random.default_rng(3), 4, 2)
    assert clustering_model(prob, x, x) == pytest.approx(0.0, abs=1e-12)


def test_blockwise_solver_minimizes_subproblem():
    prob = quadratic_problem(n=6, m=3)
    model = build_model(prob)
    rng = np.random.default_rng(42)
    anchor = random_product_point(rng, prob.n, prob.m)
    beta = model.lipschitz
    solution = ClusteringSubproblemSolver(prob).solve(model, anchor, beta).point

    def subproblem(x):
        return model.evaluate(x, anchor) + beta * prob.bregman.divergence(x, anchor)

    best = subproblem(solution)
    for _ in range(300):
        assert best <= subproblem(random_product_point(rng, prob.n, prob.m)) + 1e-9
    for scale in (1e-3, 1e-2):
        nearby = solution.copy()
        nearby[prob.n:] = np.maximum(nearby[prob.n:] + scale * rng.normal(size=prob.m), 0.0)
        assert best <= subproblem(nearby) + 1e-9


def test_fixed_method_decreases_potential():
    prob = quadratic_problem(n=8, m=3)
    x0 = ProductPoint.from_vector(random_product_point(np.random.default_rng(5), 8, 3), 8)
    result = solve_clustering(prob, x0, GMConfig(L0=1.0), method='fixed', n_iters=60)
    values = result.trace.column('f')
    assert np.all(np.diff(values) <= 1e-10)
    z, p = prob.split(result.last_iterate)
    assert z.sum() == pytest.approx(1.0)
    assert np.all(p >= 0.0)


def test_strongly_convex_method_converges_from_any_start():
    prob = quadratic_problem(n=8, m=3)
    finals = []
    for seed in (11, 12):
        start = ProductPoint.from_vector(random_product_point(np.random.default_rng(seed), 8, 3), 8)
        result = solve_clustering(prob, start, GMConfig(L0=1.0), method='adaptive_strongly_convex', n_iters=300)
        finals.append(result.last_iterate)
    assert_allclose(finals[0], finals[1], atol=1e-5)


def test_unknown_method_rejected():
    prob = quadratic_problem(n=3, m=2)
    x0 = ProductPoint.create(np.full(3, 1.0 / 3.0), np.zeros(2))
    with pytest.raises(InvalidInputError):
        solve_clustering(prob, x0, GMConfig(L0=1.0), method='newton')
