"""
Proximal Sinkhorn module for the optimization toolkit.
Handles the outer proximal loop over transport plans, whose KL-proximal steps
are entropic OT problems solved by Sinkhorn at regularization L, plus the
adaptive choice of L and the inner-iteration diagnostics.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.bregman_core import NegativeEntropy, kl_divergence
from services.gradient_methods import GMConfig, gm_fixed
from services.model_oracle import (
    InexactModel, PrecisionConversion, SubproblemSolution, SubproblemSolver, precision_from_residual,
)
from services.ot_core import (
    DEFAULT_MAX_ITERS, PLAIN_DOMAIN_THRESHOLD, DualPotentials, OTInstance, TransportPlan, balance,
    log_kernel_plan, round_to_polytope, sinkhorn, stopping_tolerance, transport_cost,
)
from utils.errors import ConvergenceError, InvalidInputError
from utils.trace import RunTrace

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-300
PRECISION_DIAMETER = 2.0


@dataclass
class ProxConfig:
    """
    Proximal loop settings.

    L, inner_accuracy and outer_iters are derived from the instance when left
    as None: L = ||C||_inf, eps~ = c eps^4 / (L n^4), N = ceil(4 L ln n / eps).

    precision_floor clamps every anchor at eps / (4 n^2), the lower bound that
    outer_precision assumes. floor_plans additionally floors at
    eps / (2 n^2 ||C||_inf) when cbar degrades.
    """

    epsilon: float
    L: Optional[float] = None
    inner_accuracy: Optional[float] = None
    outer_iters: Optional[int] = None
    adaptive_L: bool = False
    blowup: float = 10.0
    inner_constant: float = 1.0
    min_L: Optional[float] = None
    floor_plans: bool = False
    precision_floor: bool = True
    max_inner_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if self.L is not None and not self.L > 0:
            raise InvalidInputError("L must be positive")
        if self.inner_accuracy is not None and not self.inner_accuracy > 0:
            raise InvalidInputError("Inner accuracy must be positive")
        if self.outer_iters is not None and self.outer_iters <= 0:
            raise InvalidInputError("Outer iterations must be positive")
        if not self.blowup > 1:
            raise InvalidInputError("Blowup factor must exceed 1")
        if not self.inner_constant > 0:
            raise InvalidInputError("Inner accuracy constant must be positive")


def auto_outer_iters(L: float, n: int, epsilon: float) -> int:
    """N = ceil(4 L ln n / eps)."""
    return max(1, math.ceil(4.0 * L * math.log(n) / epsilon))


def auto_inner_accuracy(L: float, n: int, epsilon: float, constant: float = 1.0) -> float:
    """eps~ = c eps^4 / (L n^4)."""
    return constant * epsilon ** 4 / (L * n ** 4)


def default_L(cost: np.ndarray) -> float:
    """||C||_inf, or 1 for a zero cost."""
    norm = float(np.abs(cost).max())
    return norm if norm > 0 else 1.0


def cbar(plan, cost: np.ndarray, L: float) -> float:
    """||C||_inf + L ln(max pi / min pi)."""
    matrix = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    smallest = float(matrix.min())
    if smallest <= 0:
        raise InvalidInputError("Plan has a zero entry")
    return float(np.abs(cost).max()) + L * math.log(float(matrix.max()) / smallest)


def outer_precision(L: float, n: int, epsilon: float, inner_accuracy: float) -> float:
    """
    delta~ of one proximal step certified by its inner residual.

    Uses R~ = 2, mu = L and L~ R~ + ||grad|| = 5 L n^2 R~ / eps, i.e. the
    smoothness 4 L n^2 / eps of L * KL on plans bounded below by eps / (4 n^2).
    """
    conversion = PrecisionConversion(
        smooth_lipschitz=4.0 * L * n * n / epsilon,
        diameter=PRECISION_DIAMETER,
        grad_norm_at_opt=2.0 * L * n * n / epsilon,
        strong_convexity=L,
    )
    return precision_from_residual(conversion, inner_accuracy)


class SinkhornProxSolver(SubproblemSolver):
    """
    Solves min over U(p, q) of <C, pi> + beta KL(pi | anchor) by balancing the
    kernel anchor * exp(-C / beta), then rounds onto U(p, q).

    Consecutive steps start balancing from the previous step's potentials.
    """

    def __init__(self, instance: OTInstance, config: ProxConfig, inner_accuracy: float):
        self.instance = instance
        self.config = config
        self.inner_accuracy = inner_accuracy
        self.n = instance.n
        self.cost_norm = float(np.abs(instance.cost).max())
        self.warm_start: Optional[DualPotentials] = None

    def _prepare_anchor(self, anchor: np.ndarray, L: float) -> np.ndarray:
        n, epsilon = self.n, self.config.epsilon
        if self.config.precision_floor:
            anchor = np.maximum(anchor, epsilon / (4.0 * n * n))
            anchor = anchor / anchor.sum()
        if self.config.floor_plans and self.cost_norm > 0:
            degraded = cbar(np.maximum(anchor, LOG_FLOOR), self.instance.cost, L) / L
            limit = self.cost_norm / L + math.log(2.0 * n * n * self.cost_norm / epsilon)
            if degraded > limit:
                anchor = np.maximum(anchor, epsilon / (2.0 * n * n * self.cost_norm))
                anchor = anchor / anchor.sum()
                logger.debug("Plan floored: cbar/L=%.3g exceeded %.3g", degraded, limit)
        return anchor

    def step(self, anchor: np.ndarray, L: float, accuracy: float,
             init: Optional[DualPotentials] = None) -> Tuple[TransportPlan, int, DualPotentials]:
        """
        One proximal step from an n x n anchor plan.

        Returns:
            Tuple of (rounded plan, inner iterations, final potentials)
        """
        log_anchor = np.log(np.maximum(anchor, LOG_FLOOR))
        effective_cost = self.instance.cost - L * log_anchor
        tolerance = stopping_tolerance(effective_cost, L, accuracy)
        log_kernel = -effective_cost / L
        p, q = self.instance.p.entries, self.instance.q.entries
        plain = float(np.abs(effective_cost).max()) / L < PLAIN_DOMAIN_THRESHOLD
        duals, iterations = balance(log_kernel, p, q, tolerance, max_iters=self.config.max_inner_iters,
                                    plain=plain, init=init)
        plan = round_to_polytope(np.exp(log_kernel_plan(duals, log_kernel)), p, q)
        return plan, iterations, duals

    def solve(self, model: InexactModel, anchor, weight: float,
              target_precision: float = 0.0) -> SubproblemSolution:
        n = self.n
        matrix = self._prepare_anchor(np.asarray(anchor, dtype=float).reshape(n, n), weight)
        plan, iterations, self.warm_start = self.step(matrix, weight, self.inner_accuracy, init=self.warm_start)
        floored = np.maximum(matrix, LOG_FLOOR)
        info = {
            'inner_iters': float(iterations),
            'cbar': cbar(floored, self.instance.cost, weight),
            'kl_step': kl_divergence(plan.matrix, floored),
            'eps_tilde_theory': auto_inner_accuracy(weight, n, self.config.epsilon, self.config.inner_constant),
            'eps_tilde_effective': self.inner_accuracy,
            'feasibility_gap': plan.feasibility_gap,
        }
        delta_tilde = outer_precision(weight, n, self.config.epsilon, self.inner_accuracy)
        return SubproblemSolution(plan.matrix.ravel(), delta_tilde, info)


def adaptive_L_schedule(instance: OTInstance, config: ProxConfig) -> Tuple[float, RunTrace]:
    """
    Halve L from an overestimate until the inner Sinkhorn count of the first
    proximal step reaches blowup times the initial count.

    Returns:
        Tuple of (last L before the blowup, schedule trace with L and inner_iters)
    """
    L = config.L or default_L(instance.cost)
    min_L = config.min_L if config.min_L is not None else L / 2.0 ** 20
    n = instance.n
    anchor = np.outer(instance.p.entries, instance.q.entries)
    trace = RunTrace(solver='adaptive_L_schedule', config={'L_start': L, 'blowup': config.blowup, 'min_L': min_L})
    initial = None
    chosen = L
    k = 0
    while True:
        accuracy = config.inner_accuracy or auto_inner_accuracy(L, n, config.epsilon, config.inner_constant)
        solver = SinkhornProxSolver(instance, config, accuracy)
        try:
            _, iterations, _ = solver.step(anchor, L, accuracy)
        except ConvergenceError:
            if initial is None:
                raise
            logger.info("Inner solve failed at L=%.6g; treating as blowup", L)
            trace.append(k, L=L, inner_iters=float('inf'))
            break
        trace.append(k, L=L, inner_iters=iterations)
        if initial is None:
            initial = max(iterations, 1)
        elif iterations >= config.blowup * initial:
            break
        chosen = L
        if L / 2.0 < min_L:
            break
        L /= 2.0
        k += 1
    logger.info("Adaptive L schedule chose L=%.6g after %d halvings", chosen, k)
    return chosen, trace


def prox_sinkhorn(instance: OTInstance, config: ProxConfig, seed: Optional[int] = None) -> Tuple[TransportPlan, float, RunTrace]:
    """
    Proximal Sinkhorn: pi^{k+1} = argmin over U(p, q) of <C, pi> + L KL(pi | pi^k)
    from pi^0 = p q^T, returning the ergodic average of pi^1..pi^N.

    Args:
        instance: OT instance with strictly positive marginals
        config: proximal loop settings
        seed: recorded in the trace metadata

    Returns:
        Tuple of (averaged plan, its transport cost, outer trace)
    """
    started = time.perf_counter()
    n = instance.n
    p, q = instance.p.entries, instance.q.entries
    if n == 1:
        trace = RunTrace(solver='prox_sinkhorn', config={'epsilon': config.epsilon, 'n': 1}, seed=seed)
        plan = TransportPlan.from_matrix(np.ones((1, 1)), p, q)
        return plan, float(instance.cost[0, 0]), trace.finalize(time.perf_counter() - started)
    if not (instance.p.is_positive() and instance.q.is_positive()):
        raise InvalidInputError("Proximal Sinkhorn needs strictly positive marginals")

    if config.adaptive_L:
        L, _ = adaptive_L_schedule(instance, config)
    else:
        L = config.L or default_L(instance.cost)
    outer_iters = config.outer_iters or auto_outer_iters(L, n, config.epsilon)
    inner_accuracy = config.inner_accuracy or auto_inner_accuracy(L, n, config.epsilon, config.inner_constant)
    logger.info("Proximal Sinkhorn n=%d L=%.6g N=%d inner accuracy=%.3e", n, L, outer_iters, inner_accuracy)

    cost = instance.cost
    model = InexactModel.from_gradient(
        objective=lambda x: float(np.dot(cost.ravel(), x)),
        gradient=lambda y: cost.ravel(),
        bregman=NegativeEntropy(),
        lipschitz=L,
    )
    solver = SinkhornProxSolver(instance, config, inner_accuracy)
    result = gm_fixed(model, solver, np.outer(p, q).ravel(), GMConfig(L0=L, max_iters=outer_iters), outer_iters)

    trace = result.trace
    trace.solver = 'prox_sinkhorn'
    trace.seed = seed
    trace.config = {'epsilon': config.epsilon, 'L': L, 'outer_iters': outer_iters,
                    'inner_accuracy': inner_accuracy, 'n': n}
    plan = TransportPlan.from_matrix(result.averaged_iterate.reshape(n, n), p, q)
    value = transport_cost(plan, cost)
    trace.finalize(time.perf_counter() - started)
    logger.info("Proximal Sinkhorn finished: cost=%.10g total inner iterations=%d",
                value, int(trace.column('inner_iters').sum()))
    return plan, value, trace


def inner_iteration_growth(instance: OTInstance, epsilons: Sequence[float], L: float,
                           inner_accuracy: Optional[float] = None) -> List[Dict[str, float]]:
    """
    Total inner iterations of Proximal Sinkhorn (fixed L) against plain
    Sinkhorn at gamma = eps / (4 ln n) and accuracy eps / 2, per target eps.
    """
    rows = []
    n = instance.n
    for epsilon in epsilons:
        accuracy = inner_accuracy or epsilon / 2.0
        _, prox_value, prox_trace = prox_sinkhorn(instance, ProxConfig(epsilon=epsilon, L=L, inner_accuracy=accuracy))
        gamma = epsilon / (4.0 * math.log(n))
        plan, _, plain_trace = sinkhorn(instance, gamma, epsilon / 2.0)
        rows.append({
            'epsilon': float(epsilon),
            'prox_inner_iters': float(prox_trace.column('inner_iters').sum()),
            'prox_cost': prox_value,
            'sinkhorn_iters': float(len(plain_trace)),
            'sinkhorn_cost': transport_cost(plan, instance.cost),
        })
    return rows
