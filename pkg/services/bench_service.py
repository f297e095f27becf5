"""
Benchmark module for the optimization toolkit.
Handles the two strongly convex test problems on the unit Euclidean ball and
the bound-estimate tables comparing the fixed and adaptive gradient methods.
"""
import logging
import time
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import lambertw

from services.bregman_core import SquaredEuclidean
from services.gradient_methods import (
    GMConfig, GMResult, adaptive_strongly_convex_bounds, convex_rate_bound, gm_adaptive,
    gm_adaptive_strongly_convex, gm_fixed, gm_fixed_strongly_convex_bounds,
)
from services.model_oracle import EuclideanProjectionSolver, InexactModel
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

BENCH_DIMENSION = 100
METHODS = ('fixed', 'adaptive', 'adaptive-sc')
CHECKPOINTS = {
    1: tuple(range(160, 241, 20)),
    2: tuple(range(50, 301, 50)),
}


@dataclass(frozen=True)
class BenchProblem:
    """A mu-strongly convex objective on the unit ball with its known minimizer."""

    name: str
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    mu: float
    lipschitz: float
    x0: np.ndarray
    minimizer: np.ndarray

    @property
    def v0(self) -> float:
        diff = self.x0 - self.minimizer
        return 0.5 * float(np.dot(diff, diff))


def _weighted_square(weights: np.ndarray, x: np.ndarray) -> float:
    return float(np.dot(weights, x * x))


def _weighted_square_gradient(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    return 2.0 * weights * x


def _square_exp(weights: np.ndarray, x: np.ndarray) -> float:
    return float(np.dot(weights, x * x) + np.exp(-weights * x).sum())


def _square_exp_gradient(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    return 2.0 * weights * x - weights * np.exp(-weights * x)


def _normalized_start(dim: int) -> np.ndarray:
    start = np.full(dim, 0.2)
    return start / np.linalg.norm(start)


def weighted_quadratic(dim: int = BENCH_DIMENSION) -> BenchProblem:
    """f(x) = sum k x_k^2, mu = 2, L = 2N, minimizer 0."""
    weights = np.arange(1, dim + 1, dtype=float)
    return BenchProblem(
        name='weighted_quadratic',
        objective=partial(_weighted_square, weights),
        gradient=partial(_weighted_square_gradient, weights),
        mu=2.0,
        lipschitz=2.0 * dim,
        x0=_normalized_start(dim),
        minimizer=np.zeros(dim),
    )


def quadratic_exponential(dim: int = BENCH_DIMENSION) -> BenchProblem:
    """
    f(x) = sum k x_k^2 + exp(-k x_k), mu = 2 + 1/e, L = 2N + N^2 e.

    Each coordinate solves 2 x = exp(-k x), so x*_k = W(k/2) / k, which lies
    inside the unit ball.
    """
    weights = np.arange(1, dim + 1, dtype=float)
    minimizer = np.real(lambertw(weights / 2.0)) / weights
    return BenchProblem(
        name='quadratic_exponential',
        objective=partial(_square_exp, weights),
        gradient=partial(_square_exp_gradient, weights),
        mu=2.0 + np.exp(-1.0),
        lipschitz=2.0 * dim + dim * dim * np.e,
        x0=_normalized_start(dim),
        minimizer=minimizer,
    )


PROBLEMS = {1: weighted_quadratic, 2: quadratic_exponential}


def bench_problem(example: int, dim: int = BENCH_DIMENSION) -> BenchProblem:
    if example not in PROBLEMS:
        raise InvalidInputError(f"Unknown benchmark example: {example}")
    return PROBLEMS[example](dim)


def run_method(problem: BenchProblem, method: str, n_iters: int, max_inner_attempts: int = 64) -> GMResult:
    """
    Run one gradient method with projected Euclidean steps on the unit ball.

    fixed uses L from the problem; adaptive starts at L0 = 2 mu, and
    adaptive-sc additionally certifies mu.
    """
    if method not in METHODS:
        raise InvalidInputError(f"Unknown benchmark method: {method}")
    model = InexactModel.from_gradient(
        objective=problem.objective,
        gradient=problem.gradient,
        bregman=SquaredEuclidean('ball', 1.0),
        lipschitz=problem.lipschitz,
        mu=problem.mu,
    )
    solver = EuclideanProjectionSolver()
    if method == 'fixed':
        config = GMConfig(L0=problem.lipschitz, mu=problem.mu, max_inner_attempts=max_inner_attempts)
        return gm_fixed(model, solver, problem.x0, config, n_iters, reference=problem.minimizer)
    config = GMConfig(L0=2.0 * problem.mu, mu=problem.mu, max_inner_attempts=max_inner_attempts)
    if method == 'adaptive':
        return gm_adaptive(model, solver, problem.x0, config, n_iters, reference=problem.minimizer)
    return gm_adaptive_strongly_convex(model, solver, problem.x0, config, n_iters, reference=problem.minimizer)


def bound_estimate(problem: BenchProblem, method: str, result: GMResult) -> float:
    """
    Distance bound on V[x^{k+1}](x*) for the run's last iterate.

    fixed and adaptive-sc use the strongly convex rates; plain adaptive falls
    back to the convex rate V0 / S_N of the averaged iterate.
    """
    if method == 'fixed':
        distance, _ = gm_fixed_strongly_convex_bounds(result.trace, problem.mu, problem.lipschitz, 0.0, 0.0,
                                                      problem.v0)
        return distance
    if method == 'adaptive-sc':
        distance, _ = adaptive_strongly_convex_bounds(result.trace, problem.mu, problem.lipschitz, 0.0, 0.0,
                                                      problem.v0)
        return distance
    return convex_rate_bound(result, problem.v0)


def run_bench(example: int, method: str, checkpoints: Optional[Sequence[int]] = None,
              dim: int = BENCH_DIMENSION, max_inner_attempts: int = 64) -> List[Dict[str, float]]:
    """
    Bound-estimate table for one example and method.

    Each checkpoint k is an independent run of k + 1 iterations, so the wall
    time column is the cost of reaching that row from scratch.

    Returns:
        Rows with k, wall_time, estimate, v_ref (the actual V[x^{k+1}](x*)) and Lhat
    """
    problem = bench_problem(example, dim)
    points = tuple(checkpoints) if checkpoints else CHECKPOINTS[example]
    if any(k < 0 for k in points):
        raise InvalidInputError("Checkpoints must be nonnegative")
    rows = []
    for k in points:
        started = time.perf_counter()
        result = run_method(problem, method, k + 1, max_inner_attempts)
        elapsed = time.perf_counter() - started
        estimate = bound_estimate(problem, method, result)
        rows.append({
            'k': float(k),
            'wall_time': elapsed,
            'estimate': estimate,
            'v_ref': float(result.trace.last()['v_ref']),
            'Lhat': result.Lhat,
        })
        logger.info("bench example=%d method=%s k=%d estimate=%.5g (%.2fs)", example, method, k, estimate, elapsed)
    return rows


def format_table(rows: List[Dict[str, float]]) -> Tuple[List[str], List[List[str]]]:
    """Header and string cells of the k / wall time / estimate table."""
    header = ['k', 'wall_time', 'estimate']
    cells = [[str(int(row['k'])), f"{row['wall_time']:.3f}", f"{row['estimate']:.5g}"] for row in rows]
    return header, cells
