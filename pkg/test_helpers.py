"""
Tests for file helpers, instance generators and run traces.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from utils.errors import InvalidInputError
from utils.helpers import (
    floor_and_normalize, format_float, grid_cost_matrix, read_csv_array, read_csv_vector, truncated_gaussians,
    weights_from_spec, write_csv_array, write_json,
)
from utils.trace import RunTrace


def test_floor_and_normalize():
    values = floor_and_normalize([0.0, 1.0, 3.0], floor=1.0)
    assert_allclose(values, [0.2, 0.2, 0.6])
    with pytest.raises(InvalidInputError):
        floor_and_normalize([-1.0, 2.0])
    with pytest.raises(InvalidInputError):
        floor_and_normalize([])


def test_grid_cost_matrix():
    cost = grid_cost_matrix((2, 2))
    assert cost.shape == (4, 4)
    assert cost[0, 3] == pytest.approx(math.sqrt(2.0))
    assert_allclose(np.diag(cost), 0.0)
    assert grid_cost_matrix((2, 2), 'sqeuclid')[0, 3] == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        grid_cost_matrix((2, 2), 'manhattan')


def test_truncated_gaussians_reproducible():
    grid, first, weights = truncated_gaussians(4, seed=42)
    _, second, _ = truncated_gaussians(4, seed=42)
    assert grid.size == 101
    assert grid[0] == pytest.approx(-5.0) and grid[-1] == pytest.approx(5.0)
    assert_allclose(weights, 0.25)
    for a, b in zip(first, second):
        assert np.array_equal(a, b)
        assert np.all(a > 0)
        assert a.sum() == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        truncated_gaussians(0, seed=1)


def test_csv_round_trip_with_header(tmp_path):
    path = tmp_path / 'cost.csv'
    path.write_text('a,b\n0,1\n1,0\n')
    assert_allclose(read_csv_array(str(path)), [[0.0, 1.0], [1.0, 0.0]])

    out = tmp_path / 'nested' / 'vector.csv'
    write_csv_array(str(out), np.array([0.1, 1.0 / 3.0]))
    assert out.read_text() == f'{format_float(0.1)},{format_float(1.0 / 3.0)}\n'
    assert read_csv_vector(str(out))[1] == 1.0 / 3.0


def test_csv_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        read_csv_array(str(tmp_path / 'missing.csv'))
    bad = tmp_path / 'bad.csv'
    bad.write_text('x,y\nfoo,bar\n')
    with pytest.raises(InvalidInputError):
        read_csv_array(str(bad))


def test_weights_from_spec(tmp_path):
    assert_allclose(weights_from_spec('uniform', 4), 0.25)
    path = tmp_path / 'weights.csv'
    path.write_text('0.3,0.7\n')
    assert_allclose(weights_from_spec(str(path), 2), [0.3, 0.7])
    with pytest.raises(InvalidInputError):
        weights_from_spec(str(path), 3)


def test_write_json_is_sorted(tmp_path):
    path = tmp_path / 'result.json'
    write_json(str(path), {'b': 1, 'a': 0.5})
    assert path.read_text().index('"a"') < path.read_text().index('"b"')


def test_run_trace_records_and_freezes(tmp_path):
    trace = RunTrace(solver='demo', config={'L': 2.0}, seed=7)
    trace.append(0, f=3.0)
    trace.append(1, f=1.5)
    with pytest.raises(InvalidInputError):
        trace.append(1, f=1.0)
    assert_allclose(trace.column('f'), [3.0, 1.5])
    assert list(trace.indices()) == [0, 1]
    assert trace.last()['f'] == 1.5

    trace.finalize(0.25)
    assert trace.frozen
    with pytest.raises(AttributeError):
        trace.seed = 8
    with pytest.raises(TypeError):
        trace.config['L'] = 3.0

    lines = trace.to_lines()
    assert lines[0] == '# solver=demo'
    assert '# seed=7' in lines
    path = tmp_path / 'trace.txt'
    trace.write(str(path))
    assert path.read_text().startswith('# solver=demo')
