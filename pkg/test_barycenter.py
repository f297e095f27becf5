"""
Tests for IBP, Proximal IBP and the barycenter instance helpers.
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import softmax

from services.barycenter import (
    BarycenterInstance, auto_barycenter_inner_accuracy, auto_barycenter_outer_iters, barycenter_cbar,
    barycenter_objective, ibp, prox_ibp, weight_sweep,
)
from services.prox_sinkhorn import ProxConfig
from utils.errors import ConvergenceError, InvalidInputError
from utils.helpers import line_cost_matrix, truncated_gaussians

LINE_COST = line_cost_matrix(np.linspace(0.0, 1.0, 5))


def two_bumps():
    left = np.array([0.6, 0.25, 0.1, 0.03, 0.02])
    right = left[::-1].copy()
    return BarycenterInstance.from_arrays([left, right], [LINE_COST, LINE_COST], [0.5, 0.5])


def test_identical_measures_have_near_zero_objective():
    p = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    instance = BarycenterInstance.from_arrays([p] * 5, [LINE_COST] * 5, np.full(5, 0.2))
    q, stack, objective, trace = prox_ibp(instance, ProxConfig(epsilon=0.1, L=1.0))
    assert objective <= 0.1
    assert len(trace) == auto_barycenter_outer_iters(1.0, 5, 5, 0.1)
    assert q.dim == 5
    assert stack.max_residual() <= 1e-10


def test_ibp_plans_are_feasible():
    instance = two_bumps()
    q, stack, trace = ibp(instance, gamma=0.1, accuracy=1e-3)
    assert abs(q.entries.sum() - 1.0) < 1e-12
    for plan, measure in zip(stack.plans, instance.measures):
        assert_allclose(plan.matrix.sum(axis=1), measure.entries, atol=1e-12)
        assert_allclose(plan.matrix.sum(axis=0), q.entries, atol=1e-12)
    assert trace.solver == 'ibp'
    assert trace.frozen
    spreads = trace.column('spread')
    assert spreads[-1] <= 1e-3 / 4.0


def test_ibp_barycenter_is_symmetric_for_mirrored_measures():
    q, _, _ = ibp(two_bumps(), gamma=0.1, accuracy=1e-6)
    assert_allclose(q.entries, q.entries[::-1], atol=1e-4)


def test_single_measure_ibp_is_one_sided_sinkhorn():
    p = np.array([0.6, 0.25, 0.1, 0.03, 0.02])
    gamma = 0.2
    instance = BarycenterInstance.from_arrays([p], [LINE_COST], [1.0])
    q, stack, trace = ibp(instance, gamma=gamma, accuracy=1e-8)
    rows = softmax(-LINE_COST / gamma, axis=1)
    expected = p[:, None] * rows
    assert len(trace) == 1
    assert_allclose(q.entries, expected.sum(axis=0), atol=1e-12)
    assert_allclose(stack.plans[0].matrix, expected, atol=1e-12)


def test_ibp_sweep_cap():
    with pytest.raises(ConvergenceError):
        ibp(two_bumps(), gamma=0.01, accuracy=1e-9, max_iters=1)


def test_prox_ibp_on_truncated_gaussians():
    grid, measures, weights = truncated_gaussians(3, seed=42)
    cost = line_cost_matrix(grid)
    instance = BarycenterInstance.from_arrays(measures, [cost] * 3, weights)
    config = ProxConfig(epsilon=0.1, L=10.0, outer_iters=5, inner_accuracy=1e-2)
    q, stack, objective, trace = prox_ibp(instance, config, seed=42)
    assert len(trace) == 5
    assert q.dim == grid.size
    assert np.all(q.entries >= 0.0)
    assert abs(q.entries.sum() - 1.0) < 1e-12
    assert objective == pytest.approx(barycenter_objective(stack, instance))
    assert set(trace.last()) >= {'objective', 'inner_iters', 'cbar', 'L', 'eps_tilde_theory',
                                 'eps_tilde_effective', 'feasibility_gap'}
    assert np.all(trace.column('L') == 10.0)


def test_active_drops_zero_weights():
    p = np.full(5, 0.2)
    instance = BarycenterInstance.from_arrays([p, p, p], [LINE_COST] * 3, [0.5, 0.0, 0.5])
    active = instance.active()
    assert active.m == 2
    assert_allclose(active.weights.entries, [0.5, 0.5])
    assert two_bumps().active().m == 2


def test_instance_validation():
    p = np.full(5, 0.2)
    with pytest.raises(InvalidInputError):
        BarycenterInstance.from_arrays([p, p], [LINE_COST], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        BarycenterInstance.from_arrays([p, np.full(4, 0.25)], [LINE_COST, LINE_COST], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        BarycenterInstance.from_arrays([], [], [])
    zero = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(InvalidInputError):
        ibp(BarycenterInstance.from_arrays([zero, p], [LINE_COST] * 2, [0.5, 0.5]), 0.1, 1e-3)


def test_objective_weights_transport_costs():
    instance = two_bumps()
    diagonal = [np.diag(measure.entries) for measure in instance.measures]
    assert barycenter_objective(diagonal, instance) == 0.0
    uniform = [np.full((5, 5), 0.04)] * 2
    assert barycenter_objective(uniform, instance) == pytest.approx(0.04 * LINE_COST.sum())


def test_automatic_parameters_and_cbar():
    assert auto_barycenter_outer_iters(1.0, 2, 5, 0.1) == int(np.ceil(80.0 * np.log(5.0)))
    assert auto_barycenter_inner_accuracy(2, 5, 0.1) == pytest.approx(0.01 / 250.0)
    flat = [np.full((5, 5), 0.04)]
    assert barycenter_cbar(flat, [LINE_COST], 2.0) == pytest.approx(1.0)


def test_weight_sweep_returns_one_result_per_vector():
    instance = two_bumps()
    measures = [measure.entries for measure in instance.measures]
    config = ProxConfig(epsilon=0.1, L=1.0, outer_iters=5, inner_accuracy=1e-3)
    results = weight_sweep(measures, [LINE_COST, LINE_COST], [[1.0, 0.0], [0.5, 0.5]], config)
    assert len(results) == 2
    for q, objective in results:
        assert q.shape == (5,)
        assert abs(q.sum() - 1.0) < 1e-12
        assert objective >= 0.0


def test_prox_ibp_objective_trace_on_ten_gaussians():
    grid, measures, weights = truncated_gaussians(10, seed=7)
    cost = line_cost_matrix(grid)
    instance = BarycenterInstance.from_arrays(measures, [cost] * 10, weights)
    accuracy = 1e-2
    config = ProxConfig(epsilon=0.1, L=10.0, outer_iters=4, inner_accuracy=accuracy)
    _, _, _, trace = prox_ibp(instance, config, seed=7)
    objectives = trace.column('objective')
    assert np.all(np.diff(objectives) <= accuracy)
    assert np.all(trace.column('feasibility_gap') <= 1e-9)
