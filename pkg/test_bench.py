"""
Tests for the benchmark problems and bound-estimate tables.
"""
import numpy as np
import pytest

from services.bench_service import (
    CHECKPOINTS, bench_problem, format_table, quadratic_exponential, run_bench, run_method, weighted_quadratic,
)
from utils.errors import InvalidInputError


def test_weighted_quadratic_setup():
    problem = weighted_quadratic()
    assert problem.v0 == pytest.approx(0.5)
    assert np.linalg.norm(problem.x0) == pytest.approx(1.0)
    assert problem.mu == 2.0
    assert problem.lipschitz == 200.0


def test_quadratic_exponential_minimizer():
    problem = quadratic_exponential()
    assert np.abs(problem.gradient(problem.minimizer)).max() < 1e-10
    assert np.linalg.norm(problem.minimizer) < 1.0
    assert problem.mu == pytest.approx(2.0 + 1.0 / np.e)


def test_fixed_estimate_matches_contraction():
    rows = run_bench(1, 'fixed', [240])
    assert rows[0]['k'] == 240
    assert rows[0]['estimate'] == pytest.approx(0.5 * 0.99 ** 241, rel=1e-12)
    assert rows[0]['v_ref'] <= rows[0]['estimate']
    assert rows[0]['Lhat'] == pytest.approx(200.0)


@pytest.mark.parametrize('example', [1, 2])
def test_adaptive_strongly_convex_estimate_bounds_distance(example):
    rows = run_bench(example, 'adaptive-sc', [20])
    assert rows[0]['v_ref'] <= rows[0]['estimate'] + 1e-10


def test_adaptive_run_is_monotone():
    result = run_method(quadratic_exponential(20), 'adaptive', 30)
    values = result.trace.column('f')
    assert np.all(np.diff(values) <= 1e-9)
    assert len(result.trace) == 30


def test_default_checkpoints_and_table():
    rows = run_bench(1, 'fixed', dim=10)
    assert [int(row['k']) for row in rows] == list(CHECKPOINTS[1])
    header, cells = format_table(rows)
    assert header == ['k', 'wall_time', 'estimate']
    assert cells[0][0] == '160'
    assert len(cells) == len(rows)


def test_unknown_example_and_method():
    with pytest.raises(InvalidInputError):
        bench_problem(3)
    with pytest.raises(InvalidInputError):
        run_method(weighted_quadratic(5), 'newton', 3)
    with pytest.raises(InvalidInputError):
        run_bench(1, 'fixed', [-1])


def test_adaptive_estimate_beats_fixed_on_weighted_quadratic():
    fixed = run_bench(1, 'fixed', [240])[0]
    adaptive = run_bench(1, 'adaptive-sc', [240])[0]
    assert adaptive['estimate'] < fixed['estimate']
    assert adaptive['Lhat'] < 200.0


@pytest.mark.parametrize('example, method, k, reference', [
    (1, 'adaptive-sc', 240, 0.00282),
    (1, 'fixed', 240, 0.08873),
    (2, 'adaptive-sc', 300, 0.14456),
])
def test_estimates_within_an_order_of_magnitude_of_reference(example, method, k, reference):
    estimate = run_bench(example, method, [k])[0]['estimate']
    assert reference / 10.0 <= estimate <= reference * 10.0
