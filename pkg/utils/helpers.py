"""
Helper utility functions for the optimization toolkit.
File I/O, float formatting and instance generators shared by the commands.
"""
import json
import os
import tempfile
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from utils.errors import InvalidInputError

FLOAT_FORMAT = '%.17g'
GAUSSIAN_GRID_STEP = 0.1


def format_float(value: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    return FLOAT_FORMAT % float(value)


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path through a temporary file and an atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path: str, payload: Dict[str, Any]) -> None:
    """Write a JSON document atomically; floats keep their exact repr."""
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + '\n')


def read_csv_array(path: str) -> np.ndarray:
    """
    Read a numeric CSV file into a 2-d array.

    A single non-numeric header row is tolerated.

    Args:
        path: CSV file path

    Returns:
        2-d float array (a vector file gives shape (1, n) or (n, 1))
    """
    if not os.path.isfile(path):
        raise InvalidInputError(f"File not found: {path}")
    for skip in (0, 1):
        try:
            data = np.loadtxt(path, delimiter=',', ndmin=2, skiprows=skip)
        except ValueError:
            continue
        if data.size == 0:
            break
        if not np.all(np.isfinite(data)):
            raise InvalidInputError(f"Non-finite values in {path}")
        return data
    raise InvalidInputError(f"Could not parse numeric CSV: {path}")


def read_csv_vector(path: str) -> np.ndarray:
    """Read a CSV file holding one vector (a row, a column or a grid, flattened row-major)."""
    return read_csv_array(path).ravel()


def write_csv_array(path: str, array: np.ndarray) -> None:
    """Write a vector or matrix as CSV with 17 significant digits."""
    matrix = np.atleast_2d(np.asarray(array, dtype=float))
    lines = [','.join(format_float(v) for v in row) for row in matrix]
    atomic_write_text(path, '\n'.join(lines) + '\n')


def floor_and_normalize(values: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """
    Replace zero entries by floor and rescale to unit mass.

    Args:
        values: nonnegative intensities (image pixels or histogram counts)
        floor: value substituted for exact zeros

    Returns:
        Strictly positive vector summing to one
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise InvalidInputError("Empty marginal")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidInputError("Marginal entries must be finite and nonnegative")
    values = np.where(values == 0.0, floor, values)
    return values / values.sum()


def grid_cost_matrix(shape: Tuple[int, int], metric: str = 'euclid') -> np.ndarray:
    """
    Pairwise distances between pixels of an image grid.

    Args:
        shape: (height, width) of the image
        metric: 'euclid' for plain distance, 'sqeuclid' for squared distance

    Returns:
        (h*w) x (h*w) symmetric cost matrix with zero diagonal
    """
    if metric not in ('euclid', 'sqeuclid'):
        raise InvalidInputError(f"Unknown metric: {metric}")
    height, width = shape
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing='ij')
    points = np.column_stack([rows.ravel(), cols.ravel()]).astype(float)
    return cdist(points, points, metric='euclidean' if metric == 'euclid' else 'sqeuclidean')


def line_cost_matrix(grid: np.ndarray, metric: str = 'sqeuclid') -> np.ndarray:
    """Pairwise distances between points of a 1-d grid."""
    points = np.asarray(grid, dtype=float).reshape(-1, 1)
    return cdist(points, points, metric='euclidean' if metric == 'euclid' else 'sqeuclidean')


def gaussian_grid() -> np.ndarray:
    """The grid -5:0.1:5 (101 points)."""
    return np.arange(-50, 51) * GAUSSIAN_GRID_STEP


def truncated_gaussians(m: int, seed: int, floor: float = 1e-10) -> Tuple[np.ndarray, List[np.ndarray], np.ndarray]:
    """
    Generate m normal densities truncated to the grid -5:0.1:5.

    Means are drawn from U[-5, 5] and standard deviations from U[0.25, 1.25].
    Entries are floored so every measure is strictly positive.

    Args:
        m: number of measures
        seed: generator seed
        floor: lower bound applied before renormalization

    Returns:
        Tuple of (grid, measures, uniform weights)
    """
    if m <= 0:
        raise InvalidInputError("Number of measures must be positive")
    rng = np.random.default_rng(seed)
    grid = gaussian_grid()
    means = rng.uniform(-5.0, 5.0, size=m)
    sigmas = rng.uniform(0.25, 1.25, size=m)
    measures = []
    for mean, sigma in zip(means, sigmas):
        log_density = -0.5 * ((grid - mean) / sigma) ** 2
        density = np.exp(log_density - logsumexp(log_density))
        density = np.maximum(density, floor)
        measures.append(density / density.sum())
    return grid, measures, np.full(m, 1.0 / m)


def weights_from_spec(spec: str, m: int) -> np.ndarray:
    """Parse a weight specification: 'uniform' or a CSV file path."""
    if spec == 'uniform':
        return np.full(m, 1.0 / m)
    weights = read_csv_vector(spec)
    if weights.size != m:
        raise InvalidInputError(f"Expected {m} weights, got {weights.size}")
    return weights


def list_csv_files(directory: str) -> List[str]:
    """Sorted list of .csv files in a directory."""
    if not os.path.isdir(directory):
        raise InvalidInputError(f"Not a directory: {directory}")
    names = sorted(name for name in os.listdir(directory) if name.lower().endswith('.csv'))
    if not names:
        raise InvalidInputError(f"No CSV files in {directory}")
    return [os.path.join(directory, name) for name in names]


def as_float_list(values: Sequence[float]) -> List[float]:
    """Convert an array to a JSON-friendly list of Python floats."""
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]
