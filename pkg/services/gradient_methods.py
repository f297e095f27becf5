"""
Gradient method module for the optimization toolkit.
Handles the fixed-L method, the adaptive method with backtracking on L and the
adaptive method for relatively strongly convex models, plus the theoretical
bound calculators for their traces.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from services.model_oracle import InexactModel, SubproblemSolver
from utils.errors import CertificateError, InvalidInputError
from utils.trace import RunTrace

logger = logging.getLogger(__name__)

HALVING_FLOOR = 1e-12
EXIT_SLACK = 1e-12


@dataclass
class GMConfig:
    """Gradient method settings."""

    L0: float
    delta: float = 0.0
    delta_tilde: float = 0.0
    mu: Optional[float] = None
    max_iters: int = 10000
    max_inner_attempts: int = 64

    def __post_init__(self):
        if not self.L0 > 0:
            raise InvalidInputError("L0 must be positive")
        if self.delta < 0 or self.delta_tilde < 0:
            raise InvalidInputError("delta and delta_tilde must be nonnegative")
        if self.mu is not None and self.mu < 0:
            raise InvalidInputError("mu must be nonnegative")
        if self.max_iters <= 0 or self.max_inner_attempts <= 0:
            raise InvalidInputError("Iteration caps must be positive")


@dataclass
class GMResult:
    """Iterates, averaging weights and trace of a gradient method run."""

    last_iterate: np.ndarray
    averaged_iterate: np.ndarray
    best_iterate: np.ndarray
    weights: List[float]
    S_N: float
    trace: RunTrace
    Lhat: float
    lipschitz_sequence: List[float] = field(default_factory=list)
    total_attempts: int = 0


def lhat(mu: Optional[float], lipschitz_sequence: Sequence[float]) -> float:
    """
    Effective constant with 1 - mu/Lhat equal to the geometric mean of 1 - mu/L_k.

    Without mu (or mu = 0) this is the geometric mean of the L_k themselves.
    """
    values = np.asarray(lipschitz_sequence, dtype=float)
    if values.size == 0:
        raise InvalidInputError("Empty L sequence")
    if not mu:
        return float(np.exp(np.mean(np.log(values))))
    factors = 1.0 - mu / values
    if np.any(factors <= 0):
        return float(mu)
    mean_factor = float(np.exp(np.mean(np.log(factors))))
    return float(mu / (1.0 - mean_factor))


class _Run:
    """Shared bookkeeping of a single method run."""

    def __init__(self, model: InexactModel, x0, reference, solver_name: str, config: GMConfig):
        self.model = model
        self.objective = model.objective
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.x = np.asarray(x0, dtype=float)
        if not model.bregman.contains(self.x):
            raise InvalidInputError("Starting point outside the model domain")
        self.trace = RunTrace(solver=solver_name, config={
            'L0': config.L0, 'delta': config.delta, 'delta_tilde': config.delta_tilde,
            'mu': config.mu, 'max_inner_attempts': config.max_inner_attempts,
        })
        self.weighted_sum = np.zeros_like(self.x)
        self.S = 0.0
        self.weights: List[float] = []
        self.lipschitz: List[float] = []
        self.best = self.x.copy()
        self.best_value = self.f(self.x)
        self.total_attempts = 0

    def f(self, x) -> float:
        return float(self.objective(x)) if self.objective is not None else float('nan')

    def accept(self, k: int, x_new: np.ndarray, L: float, attempts: int, weight: float,
               delta_tilde: float, info: dict) -> None:
        value = self.f(x_new)
        metrics = {'L': L, 'attempts': attempts, 'delta_tilde': delta_tilde}
        if self.objective is not None:
            metrics['f'] = value
        if self.reference is not None:
            metrics['v_ref'] = self.model.bregman.divergence(self.reference, x_new)
        metrics.update(info)
        self.trace.append(k, **metrics)
        self.weighted_sum += weight * x_new
        self.S += weight
        self.weights.append(weight)
        self.lipschitz.append(L)
        self.total_attempts += attempts
        if self.objective is not None and value < self.best_value:
            self.best, self.best_value = x_new.copy(), value
        self.x = x_new

    def result(self, mu: Optional[float]) -> GMResult:
        return GMResult(
            last_iterate=self.x,
            averaged_iterate=self.weighted_sum / self.S,
            best_iterate=self.best,
            weights=self.weights,
            S_N=self.S,
            trace=self.trace,
            Lhat=lhat(mu, self.lipschitz),
            lipschitz_sequence=self.lipschitz,
            total_attempts=self.total_attempts,
        )


def gm_fixed(model: InexactModel, solver: SubproblemSolver, x0, config: GMConfig, n_iters: int,
             reference=None) -> GMResult:
    """
    Gradient method with a fixed model constant L.

    x_{k+1} = argmin {psi(x, x_k) + L V[x_k](x)} solved to precision delta_tilde;
    the averaged iterate is the plain mean of x_1..x_N.

    Args:
        model: model with its (delta, L) certificate
        solver: subproblem solver
        x0: starting point
        config: method settings (L0 is ignored, the model's L is used)
        n_iters: number of iterations N
        reference: optional minimizer, enables the v_ref trace column

    Returns:
        GMResult
    """
    if n_iters <= 0:
        raise InvalidInputError("Number of iterations must be positive")
    run = _Run(model, x0, reference, 'gm_fixed', config)
    L = model.lipschitz
    for k in range(n_iters):
        solution = solver.solve(model, run.x, L, config.delta_tilde)
        run.accept(k, np.asarray(solution.point, dtype=float), L, 1, 1.0 / L, solution.delta_tilde, solution.info)
    logger.debug("gm_fixed finished %d iterations with L=%.6g", n_iters, L)
    return run.result(model.mu)


def _exit_test(run: _Run, model: InexactModel, x_new: np.ndarray, L_trial: float, delta: float) -> bool:
    f_old = run.f(run.x)
    rhs = f_old + model.evaluate(x_new, run.x) + L_trial * model.bregman.divergence(x_new, run.x) + delta
    return run.f(x_new) <= rhs + EXIT_SLACK * (1.0 + abs(f_old))


def _backtrack(run: _Run, model: InexactModel, solver: SubproblemSolver, config: GMConfig,
               start: float, floor: float, mu: Optional[float] = None):
    """Try L = start, 2*start, 4*start, ... until the exit test passes."""
    for attempt in range(1, config.max_inner_attempts + 1):
        L_trial = max(start * 2.0 ** (attempt - 1), floor)
        if mu is not None:
            L_trial = max(L_trial, mu)
        solution = solver.solve(model.with_lipschitz(L_trial), run.x, L_trial, config.delta_tilde)
        x_new = np.asarray(solution.point, dtype=float)
        if _exit_test(run, model, x_new, L_trial, config.delta):
            return x_new, L_trial, attempt, solution
    raise CertificateError(
        f"Exit test failed {config.max_inner_attempts} times; "
        "the model constants or the objective evaluation are inconsistent"
    )


def gm_adaptive(model: InexactModel, solver: SubproblemSolver, x0, config: GMConfig, n_iters: int,
                reference=None) -> GMResult:
    """
    Adaptive gradient method: L_{k+1} = 2^{i_k - 1} L_k with the smallest i_k
    passing f(x_{k+1}) <= f(x_k) + psi(x_{k+1}, x_k) + L_{k+1} V[x_k](x_{k+1}) + delta.

    The averaged iterate weights x_{k+1} by 1/L_{k+1}.
    """
    if n_iters <= 0:
        raise InvalidInputError("Number of iterations must be positive")
    if model.objective is None:
        raise InvalidInputError("The adaptive method needs an evaluable objective")
    run = _Run(model, x0, reference, 'gm_adaptive', config)
    floor = HALVING_FLOOR * config.L0
    L = config.L0
    for k in range(n_iters):
        x_new, L, attempts, solution = _backtrack(run, model, solver, config, L / 2.0, floor)
        run.accept(k, x_new, L, attempts, 1.0 / L, solution.delta_tilde, solution.info)
    logger.debug("gm_adaptive finished %d iterations, %d attempts", n_iters, run.total_attempts)
    return run.result(model.mu)


def gm_adaptive_strongly_convex(model: InexactModel, solver: SubproblemSolver, x0, config: GMConfig,
                                n_iters: int, reference=None) -> GMResult:
    """
    Adaptive method for (delta, L, mu)-models.

    The trial constant starts from L_k/2 when L_k >= 2 mu and from L_k
    otherwise, and is never below mu.
    """
    mu = config.mu if config.mu is not None else model.mu
    if not mu or mu <= 0:
        raise InvalidInputError("The strongly convex method needs mu > 0")
    if config.L0 < 2.0 * mu:
        raise InvalidInputError(f"L0={config.L0} must be at least 2*mu={2.0 * mu}")
    if n_iters <= 0:
        raise InvalidInputError("Number of iterations must be positive")
    if model.objective is None:
        raise InvalidInputError("The adaptive method needs an evaluable objective")
    run = _Run(model, x0, reference, 'gm_adaptive_strongly_convex', config)
    floor = HALVING_FLOOR * config.L0
    L = config.L0
    for k in range(n_iters):
        start = L / 2.0 if L >= 2.0 * mu else L
        x_new, L, attempts, solution = _backtrack(run, model, solver, config, start, floor, mu=mu)
        run.accept(k, x_new, L, attempts, 1.0 / L, solution.delta_tilde, solution.info)
    logger.debug("gm_adaptive_strongly_convex finished %d iterations", n_iters)
    return run.result(mu)


def attempt_budget(n_iters: int, lipschitz: float, L0: float) -> float:
    """Upper bound 2N + log2(L / L0) on the subproblem attempts of the adaptive method."""
    return 2.0 * n_iters + math.log2(lipschitz / L0)


def convex_rate_bound(result: GMResult, r_squared: float, delta: float = 0.0,
                      delta_tilde: float = 0.0) -> float:
    """
    R^2 / S_N + delta_tilde + delta for the averaged iterate.

    For the fixed method S_N = N / L. r_squared is V[x0](x*) when the
    minimizer is known, otherwise a user-supplied upper bound.
    """
    return r_squared / result.S_N + delta_tilde + delta


def _iteration_count(trace_or_k: Union[RunTrace, int]) -> int:
    if isinstance(trace_or_k, RunTrace):
        if len(trace_or_k) == 0:
            raise InvalidInputError("Empty trace")
        return len(trace_or_k) - 1
    return int(trace_or_k)


def gm_fixed_strongly_convex_bounds(trace_or_k: Union[RunTrace, int], mu: float, lipschitz: float,
                                    delta: float, delta_tilde: float, v0: float) -> Tuple[float, float]:
    """
    Distance and function bounds for the fixed-L method on a (delta, L, mu)-model.

    V[x^{k+1}](x*) <= (delta + delta_tilde)/mu + (1 - mu/L)^{k+1} V0
    f(y_{k+1}) - f* <= L (1 - mu/L)^{k+1} V0 + delta + delta_tilde

    Args:
        trace_or_k: trace of x^1..x^{k+1} or the index k itself
        mu: strong convexity constant
        lipschitz: L
        delta: model inexactness
        delta_tilde: subproblem precision
        v0: V[x^0](x*)

    Returns:
        (distance bound, function bound)
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    if mu > lipschitz:
        raise InvalidInputError("mu cannot exceed L")
    k = _iteration_count(trace_or_k)
    contraction = (1.0 - mu / lipschitz) ** (k + 1)
    noise = delta + delta_tilde
    return noise / mu + contraction * v0, lipschitz * contraction * v0 + noise


def adaptive_strongly_convex_bounds(trace: RunTrace, mu: float, lipschitz: float, delta: float,
                                    delta_tilde: float, v0: float) -> Tuple[float, float]:
    """
    Distance and function bounds for the adaptive strongly convex method,
    with the geometric-mean constant Lhat of the trace's L_k.
    """
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    k = _iteration_count(trace)
    effective = lhat(mu, trace.column('L'))
    contraction = (1.0 - mu / effective) ** (k + 1)
    accumulation = 1.0 - (1.0 - mu / (2.0 * lipschitz)) ** (k + 1)
    noise = delta + delta_tilde
    distance = 2.0 * lipschitz * noise / mu ** 2 * accumulation + contraction * v0
    function = 4.0 * lipschitz ** 2 * noise / mu ** 2 * accumulation + 2.0 * lipschitz * contraction * v0
    return distance, function
