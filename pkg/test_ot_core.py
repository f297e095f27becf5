"""
Tests for Sinkhorn balancing, rounding and the OT diagnostics.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.ot_core import (
    DualPotentials, OTInstance, balance, dual_objective, entropy_perturbation_bound, exact_ot_2x2,
    hilbert_residual, log_kernel_plan, reg_objective, round_to_polytope, sinkhorn, stopping_tolerance, transport_cost,
)
from utils.errors import ConvergenceError, InvalidInputError


def random_instance(rng, n):
    cost = rng.uniform(0.0, 1.0, size=(n, n))
    p = rng.dirichlet(np.ones(n)) + 1e-3
    q = rng.dirichlet(np.ones(n)) + 1e-3
    return OTInstance.from_arrays(cost, p / p.sum(), q / q.sum())


def test_instance_validation():
    with pytest.raises(InvalidInputError):
        OTInstance.from_arrays(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        OTInstance.from_arrays(np.zeros((2, 2)), [0.5, 0.5], [0.2, 0.3, 0.5])
    with pytest.raises(InvalidInputError):
        OTInstance.from_arrays([[0.0, np.inf], [1.0, 0.0]], [0.5, 0.5], [0.5, 0.5])


def test_rounding_is_feasible_and_close():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        F = rng.uniform(0.1, 1.0, size=(n, n))
        F /= F.sum()
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        plan = round_to_polytope(F, p, q)
        assert_allclose(plan.matrix.sum(axis=1), p, atol=1e-14)
        assert_allclose(plan.matrix.sum(axis=0), q, atol=1e-14)
        assert np.all(plan.matrix >= 0.0)
        residual = np.abs(F.sum(axis=1) - p).sum() + np.abs(F.sum(axis=0) - q).sum()
        assert np.abs(plan.matrix - F).sum() <= residual + 1e-12


def test_dual_objective_value_and_gradient():
    n, gamma = 3, 1.0
    flat = OTInstance.from_arrays(np.zeros((n, n)), np.full(n, 1.0 / n), np.full(n, 1.0 / n))
    zero = DualPotentials(np.zeros(n), np.zeros(n))
    assert dual_objective(zero, flat, gamma) == pytest.approx(9.0)

    instance = random_instance(np.random.default_rng(5), n)
    gamma = 0.5
    u, v = np.array([0.1, -0.3, 0.2]), np.array([-0.2, 0.4, 0.0])
    plan = np.exp(log_kernel_plan(DualPotentials(u, v), -instance.cost / gamma))
    h = 1e-6
    numeric = []
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        upper = dual_objective(DualPotentials(u + step, v), instance, gamma)
        lower = dual_objective(DualPotentials(u - step, v), instance, gamma)
        numeric.append((upper - lower) / (2.0 * h))
    assert_allclose(numeric, plan.sum(axis=1) - instance.p.entries, atol=1e-7)


def test_dual_objective_does_not_increase_along_sinkhorn():
    instance = random_instance(np.random.default_rng(8), 5)
    gamma = 0.1
    values = []
    sinkhorn(instance, gamma, 1e-6, callback=lambda t, duals: values.append(dual_objective(duals, instance, gamma)))
    values = np.array(values)
    assert len(values) > 2
    assert np.all(np.diff(values) <= 1e-12 * (1.0 + np.abs(values[:-1])))


def test_rounding_rejects_negative_matrix():
    with pytest.raises(InvalidInputError):
        round_to_polytope(np.array([[0.5, -0.1], [0.3, 0.3]]), [0.5, 0.5], [0.5, 0.5])


def test_stopping_tolerance_is_clamped():
    cost = np.zeros((3, 3))
    assert stopping_tolerance(cost, 1.0, 1e6) == 2.0
    tolerance = stopping_tolerance(np.array([[0.0, 1.0], [1.0, 0.0]]), 0.5, 0.01)
    expected = 0.01 / 4.0 / (1.0 + 2.0 * 0.5 * math.log(4.0 * 0.5 * 4.0 / 0.01))
    assert tolerance == pytest.approx(expected)


def test_sinkhorn_regularized_gap_against_reference():
    rng = np.random.default_rng(7)
    accuracy = 0.01
    for trial in range(50):
        n = 2 + trial % 9
        gamma = (0.1, 1.0)[trial % 2]
        instance = random_instance(rng, n)
        plan, _, trace = sinkhorn(instance, gamma, accuracy)
        reference, _, _ = sinkhorn(instance, gamma, accuracy / 100.0)
        assert plan.feasibility_gap <= 1e-12
        assert reg_objective(plan, instance, gamma) - reg_objective(reference, instance, gamma) <= accuracy
        assert len(trace) > 0


@pytest.mark.parametrize('seed, n, gamma', [(3, 5, 1.0), (4, 8, 0.1), (5, 2, 0.1), (6, 10, 1.0)])
def test_hilbert_residual_is_monotone(seed, n, gamma):
    rng = np.random.default_rng(seed)
    instance = random_instance(rng, n)
    log_kernel = -instance.cost / gamma
    p, q = instance.p.entries, instance.q.entries
    star, _ = balance(log_kernel, p, q, 1e-12)

    residuals = []
    balance(log_kernel, p, q, 1e-6,
            callback=lambda t, duals: residuals.append(hilbert_residual(duals, star, t)))
    assert residuals[0] <= (instance.cost.max() - instance.cost.min()) / gamma + 1e-12
    assert all(b <= a + 1e-9 for a, b in zip(residuals, residuals[1:]))


def test_sinkhorn_plain_and_log_domains_agree():
    rng = np.random.default_rng(11)
    instance = random_instance(rng, 4)
    plain, _, _ = sinkhorn(instance, 1.0, 1e-6, plain_threshold=1e9)
    logged, _, _ = sinkhorn(instance, 1.0, 1e-6, plain_threshold=0.0)
    assert_allclose(plain.matrix, logged.matrix, atol=1e-12)


def test_sinkhorn_small_gamma_stays_finite():
    rng = np.random.default_rng(5)
    instance = random_instance(rng, 4)
    plan, duals, _ = sinkhorn(instance, 1e-2, 1e-2)
    assert np.all(np.isfinite(plan.matrix))
    assert np.all(np.isfinite(duals.u)) and np.all(np.isfinite(duals.v))


def test_sinkhorn_iteration_cap():
    rng = np.random.default_rng(9)
    instance = random_instance(rng, 5)
    with pytest.raises(ConvergenceError):
        sinkhorn(instance, 1.0, 1e-8, max_iters=1)


def test_sinkhorn_edge_cases():
    single = OTInstance.from_arrays([[3.0]], [1.0], [1.0])
    plan, _, trace = sinkhorn(single, 1.0, 0.1)
    assert_allclose(plan.matrix, [[1.0]])
    assert len(trace) == 0
    with pytest.raises(InvalidInputError):
        sinkhorn(OTInstance.from_arrays(np.zeros((2, 2)), [1.0, 0.0], [0.5, 0.5]), 1.0, 0.1)
    with pytest.raises(InvalidInputError):
        sinkhorn(single, 0.0, 0.1)


def test_exact_2x2_oracle():
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    value, plan = exact_ot_2x2(OTInstance.from_arrays(cost, [0.7, 0.3], [0.4, 0.6]))
    assert value == pytest.approx(0.3)
    assert_allclose(plan, [[0.4, 0.3], [0.0, 0.3]], atol=1e-15)
    value, _ = exact_ot_2x2(OTInstance.from_arrays(cost, [0.5, 0.5], [0.5, 0.5]))
    assert value == pytest.approx(0.0)
    assert transport_cost(plan, cost) == pytest.approx(0.3)


def test_hilbert_residual_parity_and_shape():
    a = DualPotentials(np.array([0.0, 1.0]), np.array([0.0, 3.0]))
    b = DualPotentials(np.zeros(2), np.zeros(2))
    assert hilbert_residual(a, b, 0) == pytest.approx(3.0)
    assert hilbert_residual(a, b, 1) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        hilbert_residual(a, DualPotentials(np.zeros(3), np.zeros(3)), 0)


def test_entropy_perturbation_bound():
    assert entropy_perturbation_bound(0.0, 3) == 0.0
    assert entropy_perturbation_bound(0.5, 2) == pytest.approx(2.0 * 0.5 * math.log(8.0))
