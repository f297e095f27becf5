"""
Wasserstein barycenter module for the optimization toolkit.
Handles iterative Bregman projections in the log domain and the proximal
outer loop that calls them at moderate regularization.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from services.bregman_core import ProbabilityVector
from services.ot_core import TransportPlan, round_to_polytope
from services.prox_sinkhorn import ProxConfig, default_L
from utils.errors import ConvergenceError, InvalidInputError
from utils.trace import RunTrace

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 10 ** 5
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class BarycenterInstance:
    """Measures p_l with costs C_l and barycentric weights w."""

    measures: Tuple[ProbabilityVector, ...]
    costs: Tuple[np.ndarray, ...]
    weights: ProbabilityVector

    def __post_init__(self):
        m = len(self.measures)
        if m == 0:
            raise InvalidInputError("A barycenter needs at least one measure")
        if len(self.costs) != m or self.weights.dim != m:
            raise InvalidInputError("Measures, costs and weights disagree in count")
        n = self.measures[0].dim
        for measure, cost in zip(self.measures, self.costs):
            if measure.dim != n or np.shape(cost) != (n, n):
                raise InvalidInputError("All measures and costs must share the dimension n")
            if not np.all(np.isfinite(cost)):
                raise InvalidInputError("Cost matrices must be finite")

    @classmethod
    def from_arrays(cls, measures: Sequence, costs: Sequence, weights) -> 'BarycenterInstance':
        return cls(
            tuple(ProbabilityVector.from_array(p) for p in measures),
            tuple(np.asarray(c, dtype=float) for c in costs),
            ProbabilityVector.from_array(weights),
        )

    @property
    def n(self) -> int:
        return self.measures[0].dim

    @property
    def m(self) -> int:
        return len(self.measures)

    def active(self) -> 'BarycenterInstance':
        """Drop measures with zero weight."""
        keep = [l for l in range(self.m) if self.weights.entries[l] > 0]
        if len(keep) == self.m:
            return self
        logger.info("Dropping %d zero-weight measures", self.m - len(keep))
        return BarycenterInstance(
            tuple(self.measures[l] for l in keep),
            tuple(self.costs[l] for l in keep),
            ProbabilityVector.from_array(self.weights.entries[keep]),
        )


@dataclass
class PlanStack:
    """Plans pi_l with row marginals p_l and the common column marginal q."""

    plans: List[TransportPlan]
    common_marginal: ProbabilityVector

    def max_residual(self) -> float:
        return max(plan.feasibility_gap for plan in self.plans)


def barycenter_objective(stack, instance: BarycenterInstance) -> float:
    """sum_l w_l <C_l, pi_l>."""
    plans = stack.plans if isinstance(stack, PlanStack) else stack
    total = 0.0
    for weight, cost, plan in zip(instance.weights.entries, instance.costs, plans):
        matrix = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan)
        total += weight * float(np.sum(cost * matrix))
    return total


def _ibp_log_kernels(log_kernels: List[np.ndarray], instance: BarycenterInstance, tolerance: float,
                     max_iters: int, trace: Optional[RunTrace] = None) -> Tuple[np.ndarray, PlanStack, int]:
    """
    Iterative Bregman projections on given log-kernels.

    Each sweep applies the v-update (common column marginal) then the
    u-update (row marginals p_l), and stops once
    sum_l w_l ||B_l^T 1 - qbar||_1 <= tolerance.
    """
    weights = instance.weights.entries
    log_p = [np.log(measure.entries) for measure in instance.measures]
    n = instance.n
    u = [np.zeros(n) for _ in log_kernels]
    v = [np.zeros(n) for _ in log_kernels]
    for sweep in range(1, max_iters + 1):
        log_columns = [logsumexp(lk + ul[:, None], axis=0) for lk, ul in zip(log_kernels, u)]
        log_mean = sum(w * lc for w, lc in zip(weights, log_columns))
        v = [log_mean - lc for lc in log_columns]
        u = [lp - logsumexp(lk + vl[None, :], axis=1) for lp, lk, vl in zip(log_p, log_kernels, v)]

        log_plans = [ul[:, None] + lk + vl[None, :] for ul, lk, vl in zip(u, log_kernels, v)]
        columns = [np.exp(logsumexp(lp, axis=0)) for lp in log_plans]
        qbar = sum(w * c for w, c in zip(weights, columns))
        spread = float(sum(w * np.abs(c - qbar).sum() for w, c in zip(weights, columns)))
        if trace is not None:
            trace.append(sweep, spread=spread)
        if spread <= tolerance:
            break
    else:
        raise ConvergenceError(f"IBP did not reach spread {tolerance:.3e} within {max_iters} sweeps")

    mass = sum(w * float(np.exp(logsumexp(lp))) for w, lp in zip(weights, log_plans))
    q = np.asarray(qbar / mass, dtype=float)
    q = q / q.sum()
    plans = [round_to_polytope(np.exp(lp), measure, q) for lp, measure in zip(log_plans, instance.measures)]
    return q, PlanStack(plans, ProbabilityVector.from_array(q)), sweep


def _ibp_tolerance(accuracy: float, costs: Sequence[np.ndarray]) -> float:
    scale = max(float(np.abs(c).max()) for c in costs)
    return accuracy / (4.0 * scale) if scale > 0 else accuracy / 4.0


def ibp(instance: BarycenterInstance, gamma: float, accuracy: float,
        max_iters: int = DEFAULT_MAX_ITERS) -> Tuple[ProbabilityVector, PlanStack, RunTrace]:
    """
    Entropic barycenter by iterative Bregman projections.

    Args:
        instance: measures (strictly positive), costs and weights
        gamma: entropic regularization
        accuracy: target accuracy eps~; sweeps stop at eps~ / (4 max ||C_l||_inf)
        max_iters: sweep cap

    Returns:
        Tuple of (barycenter q, rounded plans in U(p_l, q), sweep trace)
    """
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    if not accuracy > 0:
        raise InvalidInputError("Target accuracy must be positive")
    instance = instance.active()
    if not all(measure.is_positive() for measure in instance.measures):
        raise InvalidInputError("IBP needs strictly positive measures")
    started = time.perf_counter()
    trace = RunTrace(solver='ibp', config={'gamma': gamma, 'accuracy': accuracy, 'n': instance.n, 'm': instance.m})
    tolerance = _ibp_tolerance(accuracy, instance.costs)
    log_kernels = [-cost / gamma for cost in instance.costs]
    q, stack, sweeps = _ibp_log_kernels(log_kernels, instance, tolerance, max_iters, trace)
    logger.info("IBP finished after %d sweeps (n=%d, m=%d)", sweeps, instance.n, instance.m)
    trace.finalize(time.perf_counter() - started)
    return stack.common_marginal, stack, trace


def auto_barycenter_outer_iters(L: float, m: int, n: int, epsilon: float) -> int:
    """N = ceil(4 L m ln n / eps)."""
    return max(1, math.ceil(4.0 * L * m * math.log(n) / epsilon))


def auto_barycenter_inner_accuracy(m: int, n: int, epsilon: float, constant: float = 1.0) -> float:
    """eps~ = c eps^2 / (m n^3)."""
    return constant * epsilon ** 2 / (m * n ** 3)


def barycenter_cbar(plans: Sequence[np.ndarray], costs: Sequence[np.ndarray], L: float) -> float:
    """max over l of ||C_l||_inf + L ln(max pi_l / min pi_l)."""
    values = []
    for plan, cost in zip(plans, costs):
        floored = np.maximum(plan, LOG_FLOOR)
        values.append(float(np.abs(cost).max()) + L * math.log(float(floored.max()) / float(floored.min())))
    return max(values)


def prox_ibp(instance: BarycenterInstance, config: ProxConfig, seed: Optional[int] = None) -> Tuple[ProbabilityVector, PlanStack, float, RunTrace]:
    """
    Proximal IBP: each outer step projects pi_l^k * exp(-C_l / L) in weighted KL
    onto the barycenter constraints; the output is the ergodic average.

    Args:
        instance: barycenter instance
        config: proximal loop settings (L defaults to max ||C_l||_inf)
        seed: recorded in the trace metadata

    Returns:
        Tuple of (barycenter of the averaged stack, averaged stack, its objective, outer trace)
    """
    started = time.perf_counter()
    instance = instance.active()
    n, m = instance.n, instance.m
    if not all(measure.is_positive() for measure in instance.measures):
        raise InvalidInputError("Proximal IBP needs strictly positive measures")
    L = config.L or max(default_L(c) for c in instance.costs)
    if config.adaptive_L:
        L = _adaptive_barycenter_L(instance, config, L)
    outer_iters = config.outer_iters or auto_barycenter_outer_iters(L, m, n, config.epsilon)
    accuracy = config.inner_accuracy or auto_barycenter_inner_accuracy(m, n, config.epsilon, config.inner_constant)
    theory_accuracy = auto_barycenter_inner_accuracy(m, n, config.epsilon, config.inner_constant)
    logger.info("Proximal IBP n=%d m=%d L=%.6g N=%d inner accuracy=%.3e", n, m, L, outer_iters, accuracy)

    trace = RunTrace(solver='prox_ibp', seed=seed, config={
        'epsilon': config.epsilon, 'L': L, 'outer_iters': outer_iters, 'inner_accuracy': accuracy, 'n': n, 'm': m,
    })
    plans = [np.outer(measure.entries, np.full(n, 1.0 / n)) for measure in instance.measures]
    sums = [np.zeros((n, n)) for _ in range(m)]
    for k in range(outer_iters):
        log_kernels = [np.log(np.maximum(plan, LOG_FLOOR)) - cost / L for plan, cost in zip(plans, instance.costs)]
        effective_costs = [-L * lk for lk in log_kernels]
        tolerance = _ibp_tolerance(accuracy, effective_costs)
        diagnostic = barycenter_cbar(plans, instance.costs, L)
        _, stack, sweeps = _ibp_log_kernels(log_kernels, instance, tolerance, config.max_inner_iters)
        plans = [plan.matrix for plan in stack.plans]
        for total, plan in zip(sums, plans):
            total += plan
        trace.append(k, objective=barycenter_objective(plans, instance), inner_iters=sweeps, cbar=diagnostic,
                     L=L, eps_tilde_theory=theory_accuracy, eps_tilde_effective=accuracy,
                     feasibility_gap=stack.max_residual())

    averaged = [total / outer_iters for total in sums]
    q = averaged[0].sum(axis=0)
    q = q / q.sum()
    averaged_stack = PlanStack(
        [TransportPlan.from_matrix(plan, measure, q) for plan, measure in zip(averaged, instance.measures)],
        ProbabilityVector.from_array(q),
    )
    objective = barycenter_objective(averaged_stack, instance)
    trace.finalize(time.perf_counter() - started)
    logger.info("Proximal IBP finished: objective=%.10g", objective)
    return averaged_stack.common_marginal, averaged_stack, objective, trace


def _adaptive_barycenter_L(instance: BarycenterInstance, config: ProxConfig, L: float) -> float:
    """Halve L until the first outer step's IBP sweep count blows up."""
    n, m = instance.n, instance.m
    min_L = config.min_L if config.min_L is not None else L / 2.0 ** 20
    accuracy = config.inner_accuracy or auto_barycenter_inner_accuracy(m, n, config.epsilon, config.inner_constant)
    plans = [np.outer(measure.entries, np.full(n, 1.0 / n)) for measure in instance.measures]
    initial, chosen = None, L
    while True:
        log_kernels = [np.log(plan) - cost / L for plan, cost in zip(plans, instance.costs)]
        tolerance = _ibp_tolerance(accuracy, [-L * lk for lk in log_kernels])
        try:
            _, _, sweeps = _ibp_log_kernels(log_kernels, instance, tolerance, config.max_inner_iters)
        except ConvergenceError:
            if initial is None:
                raise
            break
        if initial is None:
            initial = max(sweeps, 1)
        elif sweeps >= config.blowup * initial:
            break
        chosen = L
        if L / 2.0 < min_L:
            break
        L /= 2.0
    logger.info("Adaptive barycenter L=%.6g", chosen)
    return chosen


def weight_sweep(measures: Sequence, costs: Sequence, weight_vectors: Sequence, config: ProxConfig) -> List[Tuple[np.ndarray, float]]:
    """Proximal IBP over several weight vectors; returns (barycenter, objective) per vector."""
    results = []
    for weights in weight_vectors:
        instance = BarycenterInstance.from_arrays(measures, costs, weights)
        q, _, objective, _ = prox_ibp(instance, config)
        results.append((q.entries, objective))
    return results
