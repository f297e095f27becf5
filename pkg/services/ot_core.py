"""
Entropic optimal transport module for the optimization toolkit.
Handles the regularized primal and dual objectives, log-domain Sinkhorn
balancing with the accuracy-driven stopping rule, rounding onto the
transportation polytope and the Hilbert-residual diagnostic.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, xlogy

from services.bregman_core import ProbabilityVector
from utils.errors import ConvergenceError, InvalidInputError
from utils.trace import RunTrace

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 10 ** 6
PLAIN_DOMAIN_THRESHOLD = 30.0
MAX_MARGINAL_TOLERANCE = 2.0


@dataclass(frozen=True)
class OTInstance:
    """Cost matrix with its two marginals."""

    cost: np.ndarray
    p: ProbabilityVector
    q: ProbabilityVector

    def __post_init__(self):
        if self.p.dim != self.q.dim:
            raise InvalidInputError(f"Marginals differ in size: {self.p.dim} vs {self.q.dim}")
        cost = np.asarray(self.cost, dtype=float)
        if cost.ndim != 2 or cost.shape != (self.p.dim, self.q.dim):
            raise InvalidInputError(f"Cost shape {cost.shape} does not match marginals ({self.p.dim}, {self.q.dim})")
        if not np.all(np.isfinite(cost)):
            raise InvalidInputError("Cost matrix must be finite")
        object.__setattr__(self, 'cost', cost)

    @classmethod
    def from_arrays(cls, cost, p, q) -> 'OTInstance':
        return cls(np.asarray(cost, dtype=float), ProbabilityVector.from_array(p), ProbabilityVector.from_array(q))

    @property
    def n(self) -> int:
        return self.p.dim


@dataclass
class TransportPlan:
    """Nonnegative plan with its marginal residuals (||pi 1 - p||_1, ||pi^T 1 - q||_1)."""

    matrix: np.ndarray
    marginal_residuals: Tuple[float, float]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, p, q) -> 'TransportPlan':
        matrix = np.asarray(matrix, dtype=float)
        p = p.entries if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
        q = q.entries if isinstance(q, ProbabilityVector) else np.asarray(q, dtype=float)
        residuals = (float(np.abs(matrix.sum(axis=1) - p).sum()), float(np.abs(matrix.sum(axis=0) - q).sum()))
        return cls(matrix, residuals)

    @property
    def feasibility_gap(self) -> float:
        return sum(self.marginal_residuals)


@dataclass
class DualPotentials:
    """Log-domain scalings u, v of B(u, v) = diag(e^u) K diag(e^v)."""

    u: np.ndarray
    v: np.ndarray


def _matrix(plan) -> np.ndarray:
    return plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)


def reg_objective(plan, instance: OTInstance, gamma: float) -> float:
    """<C, pi> + gamma * sum pi ln pi."""
    matrix = _matrix(plan)
    return float(np.sum(instance.cost * matrix) + gamma * np.sum(xlogy(matrix, matrix)))


def transport_cost(plan, cost: np.ndarray) -> float:
    """<C, pi>."""
    return float(np.sum(np.asarray(cost) * _matrix(plan)))


def log_kernel_plan(duals: DualPotentials, log_kernel: np.ndarray) -> np.ndarray:
    """log B(u, v) = u_i + log K_ij + v_j."""
    return duals.u[:, None] + log_kernel + duals.v[None, :]


def dual_objective(duals: DualPotentials, instance: OTInstance, gamma: float) -> float:
    """sum B(u, v) - <u, p> - <q, v>, with the mass evaluated by log-sum-exp."""
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    mass = math.exp(logsumexp(log_kernel_plan(duals, -instance.cost / gamma)))
    return mass - float(np.dot(duals.u, instance.p.entries)) - float(np.dot(instance.q.entries, duals.v))


def round_to_polytope(F: np.ndarray, p, q) -> TransportPlan:
    """
    Round a nonnegative matrix onto U(p, q).

    Rows are scaled down to at most p, columns down to at most q, and the
    missing mass is restored by the rank-one correction err_r err_c^T / ||err_r||_1.

    Args:
        F: nonnegative n x n matrix of (approximately) unit mass
        p: row marginal
        q: column marginal

    Returns:
        TransportPlan with marginals (p, q)
    """
    p = p.entries if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    q = q.entries if isinstance(q, ProbabilityVector) else np.asarray(q, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape != (p.size, q.size):
        raise InvalidInputError(f"Matrix shape {F.shape} does not match marginals")
    if np.any(F < 0) or not np.all(np.isfinite(F)):
        raise InvalidInputError("Rounding needs a finite nonnegative matrix")

    rows = F.sum(axis=1)
    row_scale = np.minimum(np.divide(p, rows, out=np.ones_like(p), where=rows > 0), 1.0)
    X = F * row_scale[:, None]
    cols = X.sum(axis=0)
    col_scale = np.minimum(np.divide(q, cols, out=np.ones_like(q), where=cols > 0), 1.0)
    Y = X * col_scale[None, :]

    err_r = np.maximum(p - Y.sum(axis=1), 0.0)
    err_c = np.maximum(q - Y.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        Y = Y + np.outer(err_r, err_c) / total
    return TransportPlan.from_matrix(Y, p, q)


def stopping_tolerance(cost: np.ndarray, gamma: float, accuracy: float) -> float:
    """
    Marginal tolerance eps' = (eps/4) / (max C - min C + 2 gamma ln(4 gamma n^2 / eps)),
    clamped to (0, 2].
    """
    n = cost.shape[0]
    spread = float(cost.max() - cost.min())
    denominator = spread + 2.0 * gamma * math.log(4.0 * gamma * n * n / accuracy)
    if denominator <= 0:
        logger.warning("Sinkhorn tolerance clamped: accuracy %.3g is large relative to gamma %.3g", accuracy, gamma)
        return MAX_MARGINAL_TOLERANCE
    tolerance = accuracy / (4.0 * denominator)
    if tolerance > MAX_MARGINAL_TOLERANCE:
        logger.warning("Sinkhorn tolerance %.3g clamped to %.1f", tolerance, MAX_MARGINAL_TOLERANCE)
        return MAX_MARGINAL_TOLERANCE
    return tolerance


class _Balancer:
    """Alternating row/column balancing of diag(e^u) K diag(e^v)."""

    def __init__(self, log_kernel: np.ndarray, log_p: np.ndarray, log_q: np.ndarray, plain: bool):
        self.log_kernel = log_kernel
        self.log_p = log_p
        self.log_q = log_q
        self.kernel = np.exp(log_kernel) if plain else None

    def _plain_update(self, other: np.ndarray, axis: int) -> Optional[np.ndarray]:
        with np.errstate(over='ignore', under='ignore', divide='ignore', invalid='ignore'):
            scaled = self.kernel @ np.exp(other) if axis == 1 else self.kernel.T @ np.exp(other)
            result = np.log(scaled)
        if not np.all(np.isfinite(result)):
            return None
        return result

    def update_u(self, v: np.ndarray) -> np.ndarray:
        if self.kernel is not None:
            log_rows = self._plain_update(v, axis=1)
            if log_rows is not None:
                return self.log_p - log_rows
            self._fallback()
        return self.log_p - logsumexp(self.log_kernel + v[None, :], axis=1)

    def update_v(self, u: np.ndarray) -> np.ndarray:
        if self.kernel is not None:
            log_cols = self._plain_update(u, axis=0)
            if log_cols is not None:
                return self.log_q - log_cols
            self._fallback()
        return self.log_q - logsumexp(self.log_kernel + u[:, None], axis=0)

    def _fallback(self) -> None:
        logger.info("Plain-domain scaling over/underflowed; continuing in the log domain")
        self.kernel = None

    def marginals(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.kernel is not None:
            with np.errstate(over='ignore', under='ignore', invalid='ignore'):
                eu, ev = np.exp(u), np.exp(v)
                rows, cols = eu * (self.kernel @ ev), ev * (self.kernel.T @ eu)
            if np.all(np.isfinite(rows)) and np.all(np.isfinite(cols)):
                return rows, cols
        log_plan = u[:, None] + self.log_kernel + v[None, :]
        return np.exp(logsumexp(log_plan, axis=1)), np.exp(logsumexp(log_plan, axis=0))

    def plan(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.exp(u[:, None] + self.log_kernel + v[None, :])


def balance(log_kernel: np.ndarray, p: np.ndarray, q: np.ndarray, tolerance: float,
            max_iters: int = DEFAULT_MAX_ITERS, plain: bool = False,
            callback: Optional[Callable[[int, DualPotentials], None]] = None,
            trace: Optional[RunTrace] = None,
            init: Optional[DualPotentials] = None) -> Tuple[DualPotentials, int]:
    """
    Sinkhorn balancing of a log-kernel from u = ln p, v = ln q (or from init)
    until the l1 marginal residual is at most tolerance.

    Even steps update u, odd steps update v.

    Returns:
        Tuple of (final potentials, number of updates)
    """
    balancer = _Balancer(log_kernel, np.log(p), np.log(q), plain)
    if init is None:
        u, v = np.log(p), np.log(q)
    else:
        u, v = init.u.copy(), init.v.copy()
    if callback is not None:
        callback(0, DualPotentials(u.copy(), v.copy()))
    for t in range(max_iters):
        if t % 2 == 0:
            u = balancer.update_u(v)
        else:
            v = balancer.update_v(u)
        rows, cols = balancer.marginals(u, v)
        residual = float(np.abs(rows - p).sum() + np.abs(cols - q).sum())
        if trace is not None:
            trace.append(t + 1, residual=residual)
        if callback is not None:
            callback(t + 1, DualPotentials(u.copy(), v.copy()))
        if residual <= tolerance:
            return DualPotentials(u, v), t + 1
    raise ConvergenceError(f"Sinkhorn did not reach residual {tolerance:.3e} within {max_iters} iterations")


def sinkhorn(instance: OTInstance, gamma: float, accuracy: float, max_iters: int = DEFAULT_MAX_ITERS,
             callback: Optional[Callable[[int, DualPotentials], None]] = None,
             plain_threshold: float = PLAIN_DOMAIN_THRESHOLD) -> Tuple[TransportPlan, DualPotentials, RunTrace]:
    """
    Entropic OT by Sinkhorn balancing with the accuracy-driven stopping rule.

    Args:
        instance: OT instance with strictly positive marginals
        gamma: entropic regularization
        accuracy: target accuracy eps~ of the regularized objective
        max_iters: iteration cap
        callback: called as callback(t, duals) at t = 0 and after every update
        plain_threshold: use the plain-domain fast path when ||C||_inf / gamma is below it

    Returns:
        Tuple of (rounded plan, final potentials, trace of marginal residuals)
    """
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    if not accuracy > 0:
        raise InvalidInputError("Target accuracy must be positive")
    p, q = instance.p.entries, instance.q.entries
    trace = RunTrace(solver='sinkhorn', config={'gamma': gamma, 'accuracy': accuracy, 'n': instance.n})
    if instance.n == 1:
        return TransportPlan.from_matrix(np.ones((1, 1)), p, q), DualPotentials(np.zeros(1), np.zeros(1)), trace
    if not (instance.p.is_positive() and instance.q.is_positive()):
        raise InvalidInputError("Sinkhorn needs strictly positive marginals")

    cost = instance.cost
    tolerance = stopping_tolerance(cost, gamma, accuracy)
    spread = float(cost.max() - cost.min())
    logger.debug("Sinkhorn n=%d gamma=%.3g eps'=%.3e predicted O(R0/eps')=%.3e",
                 instance.n, gamma, tolerance, spread / gamma / tolerance)
    plain = float(np.abs(cost).max()) / gamma < plain_threshold
    duals, iterations = balance(-cost / gamma, p, q, tolerance, max_iters=max_iters, plain=plain,
                                callback=callback, trace=trace)
    plan = round_to_polytope(np.exp(log_kernel_plan(duals, -cost / gamma)), p, q)
    logger.debug("Sinkhorn stopped after %d updates", iterations)
    return plan, duals, trace


def hilbert_residual(duals_t: DualPotentials, duals_star: DualPotentials, parity: int) -> float:
    """Oscillation of v - v* for even parity and of u - u* for odd parity."""
    if duals_t.u.shape != duals_star.u.shape or duals_t.v.shape != duals_star.v.shape:
        raise InvalidInputError("Dual potentials have mismatched dimensions")
    diff = duals_t.v - duals_star.v if parity % 2 == 0 else duals_t.u - duals_star.u
    return float(diff.max() - diff.min())


def entropy_perturbation_bound(distance: float, n: int) -> float:
    """2 d ln(n^2 / d) for two n x n plans at l1 distance d (0 when d = 0)."""
    if distance <= 0:
        return 0.0
    return 2.0 * distance * math.log(n * n / distance)


def exact_ot_2x2(instance: OTInstance) -> Tuple[float, np.ndarray]:
    """
    Exact optimum of a 2x2 transport problem.

    U(p, q) is the segment pi_11 = t in [max(0, q1 - p2), min(p1, q1)] and the
    cost is linear in t, so an endpoint is optimal.
    """
    if instance.cost.shape != (2, 2):
        raise InvalidInputError("The closed-form oracle handles 2x2 instances only")
    p1, p2 = instance.p.entries
    q1, q2 = instance.q.entries
    best_value, best_plan = math.inf, None
    for t in (max(0.0, q1 - p2), min(p1, q1)):
        plan = np.array([[t, p1 - t], [q1 - t, p2 - q1 + t]])
        plan = np.maximum(plan, 0.0)
        value = transport_cost(plan, instance.cost)
        if value < best_value:
            best_value, best_plan = value, plan
    return best_value, best_plan
