"""
Inexact model module for the optimization toolkit.
Handles (delta, L[, mu])-models of an objective, the subproblem solvers that
minimize psi(x, y) + beta * V[y](x), and the residual to delta-tilde conversion.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from services.bregman_core import BregmanSetup, NegativeEntropy, SquaredEuclidean
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

Point = np.ndarray


@dataclass
class InexactModel:
    """
    A (delta, L)-model psi(x, y) of an objective f, optionally with a
    relative strong convexity constant mu.

    gradient is the linear part g(y) for models of the form <g(y), x - y>;
    solvers that need more structure know their own model.
    """

    evaluate: Callable[[Point, Point], float]
    delta: float
    lipschitz: float
    bregman: BregmanSetup
    mu: Optional[float] = None
    objective: Optional[Callable[[Point], float]] = None
    gradient: Optional[Callable[[Point], np.ndarray]] = None

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta < 0:
            raise InvalidInputError("Model delta must be finite and nonnegative")
        if not np.isfinite(self.lipschitz) or self.lipschitz <= 0:
            raise InvalidInputError("Model L must be finite and positive")
        if self.mu is not None and (not np.isfinite(self.mu) or self.mu < 0):
            raise InvalidInputError("Model mu must be finite and nonnegative")

    @classmethod
    def from_gradient(cls, objective: Callable[[Point], float], gradient: Callable[[Point], np.ndarray],
                      bregman: BregmanSetup, lipschitz: float, delta: float = 0.0,
                      mu: Optional[float] = None) -> 'InexactModel':
        """Model psi(x, y) = <g(y), x - y> built from an (inexact) gradient oracle."""
        def evaluate(x: Point, y: Point) -> float:
            return float(np.dot(gradient(y), np.asarray(x) - np.asarray(y)))

        return cls(evaluate=evaluate, delta=delta, lipschitz=lipschitz, bregman=bregman,
                   mu=mu, objective=objective, gradient=gradient)

    def with_lipschitz(self, lipschitz: float) -> 'InexactModel':
        """Same model with a different trial constant."""
        return InexactModel(self.evaluate, self.delta, lipschitz, self.bregman, self.mu,
                            self.objective, self.gradient)


@dataclass
class SubproblemSolution:
    """Approximate minimizer of psi(x, y) + beta * V[y](x) and its certified precision."""

    point: Point
    delta_tilde: float = 0.0
    info: Dict[str, float] = field(default_factory=dict)


class SubproblemSolver(ABC):
    """Base class: solve(model, anchor, weight, target) -> SubproblemSolution."""

    @abstractmethod
    def solve(self, model: InexactModel, anchor: Point, weight: float,
              target_precision: float = 0.0) -> SubproblemSolution:
        """Approximate minimizer of psi(x, anchor) + weight * V[anchor](x)."""


class EntropicLinearSolver(SubproblemSolver):
    """Closed-form minimizer of <g(y), x> + beta * KL(x|y) over the simplex."""

    def solve(self, model: InexactModel, anchor: Point, weight: float,
              target_precision: float = 0.0) -> SubproblemSolution:
        if model.gradient is None:
            raise InvalidInputError("Entropic solver needs a model with a linear part")
        point = solve_entropic_linear_subproblem(model.gradient(anchor), anchor, weight)
        return SubproblemSolution(point, 0.0)


class EuclideanProjectionSolver(SubproblemSolver):
    """Closed-form projected step proj(y - g(y) / beta) for squared Euclidean setups."""

    def solve(self, model: InexactModel, anchor: Point, weight: float,
              target_precision: float = 0.0) -> SubproblemSolution:
        if model.gradient is None:
            raise InvalidInputError("Projection solver needs a model with a linear part")
        if not isinstance(model.bregman, SquaredEuclidean):
            raise InvalidInputError("Projection solver needs a squared Euclidean setup")
        if weight <= 0:
            raise InvalidInputError("Subproblem weight must be positive")
        step = np.asarray(anchor, dtype=float) - model.gradient(anchor) / weight
        return SubproblemSolution(model.bregman.project(step), 0.0)


def solve_entropic_linear_subproblem(linear_part, anchor, weight: float) -> np.ndarray:
    """
    Minimize <g, x> + beta * KL(x|y) over the simplex.

    The minimizer is x_i proportional to y_i * exp(-g_i / beta), computed as a
    softmax of log-weights.

    Args:
        linear_part: covector g
        anchor: strictly positive probability vector y
        weight: beta > 0

    Returns:
        Minimizer on the simplex
    """
    if not weight > 0:
        raise InvalidInputError("Subproblem weight must be positive")
    anchor = np.asarray(anchor, dtype=float)
    linear_part = np.asarray(linear_part, dtype=float)
    if anchor.shape != linear_part.shape:
        raise InvalidInputError("Linear part and anchor dimensions differ")
    if np.any(anchor <= 0):
        raise InvalidInputError("Anchor has a zero entry")
    return softmax(np.log(anchor) - linear_part / weight)


@dataclass
class PrecisionConversion:
    """
    Constants of a smooth subproblem used to turn an objective residual into
    a delta-tilde precision.
    """

    smooth_lipschitz: float
    diameter: float
    grad_norm_at_opt: float = 0.0
    strong_convexity: Optional[float] = None

    def __post_init__(self):
        values = [self.smooth_lipschitz, self.diameter, self.grad_norm_at_opt]
        if self.strong_convexity is not None:
            values.append(self.strong_convexity)
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise InvalidInputError("Precision constants must be finite and nonnegative")
        if self.grad_norm_at_opt > 0 and not self.strong_convexity:
            raise InvalidInputError("A nonzero gradient at the optimum requires strong convexity")


def precision_from_residual(conv: PrecisionConversion, residual: float) -> float:
    """
    delta-tilde certified by a subproblem objective residual.

    R * sqrt(2 L eps) when the gradient vanishes at the optimum, and
    (L R + ||grad||) * sqrt(2 eps / mu) otherwise.
    """
    if residual < 0 or not np.isfinite(residual):
        raise InvalidInputError("Residual must be finite and nonnegative")
    if conv.grad_norm_at_opt == 0:
        return conv.diameter * float(np.sqrt(2.0 * conv.smooth_lipschitz * residual))
    spread = conv.smooth_lipschitz * conv.diameter + conv.grad_norm_at_opt
    return spread * float(np.sqrt(2.0 * residual / conv.strong_convexity))


def variational_residual(gradient_at_solution: np.ndarray, solution: Point, optimum: Point) -> float:
    """Measured precision max(0, -<grad phi(x~), x* - x~>) of an inexact solution."""
    value = float(np.dot(gradient_at_solution, np.asarray(optimum) - np.asarray(solution)))
    return max(0.0, -value)


@dataclass
class ViolationReport:
    """Largest sandwich violations found over the checked pairs."""

    max_lower_gap: float = 0.0
    max_upper_gap: float = 0.0
    samples: int = 0
    worst_pairs: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return self.max_lower_gap <= 0 and self.max_upper_gap <= 0


def verify_model(model: InexactModel, objective: Callable[[Point], float],
                 sample_pairs: Iterable[Tuple[Point, Point]],
                 sampler: Optional[Callable[[np.random.Generator], Point]] = None,
                 n_random: int = 0, seed: int = 0, slack: float = 0.0) -> ViolationReport:
    """
    Check the model sandwich mu*V[y](x) <= f(x) - f(y) - psi(x, y) <= L*V[y](x) + delta
    on caller pairs plus optional random pairs.

    Args:
        model: model under test (mu = 0 when undeclared)
        objective: f
        sample_pairs: list of (x, y)
        sampler: draws one domain point from a generator
        n_random: number of random pairs drawn with sampler
        seed: generator seed
        slack: tolerance subtracted from every violation

    Returns:
        ViolationReport with positive gaps where the inequalities fail
    """
    pairs: List[Tuple[Point, Point]] = list(sample_pairs)
    if sampler is not None and n_random > 0:
        rng = np.random.default_rng(seed)
        pairs.extend((sampler(rng), sampler(rng)) for _ in range(n_random))

    mu = model.mu or 0.0
    report = ViolationReport()
    for index, (x, y) in enumerate(pairs):
        if not model.bregman.contains(x) or not model.bregman.contains(y):
            raise InvalidInputError(f"Sample pair {index} lies outside the model domain")
        gap = objective(x) - objective(y) - model.evaluate(x, y)
        distance = model.bregman.divergence(x, y)
        lower = mu * distance - gap - slack
        upper = gap - model.lipschitz * distance - model.delta - slack
        if lower > report.max_lower_gap:
            report.max_lower_gap = lower
            report.worst_pairs.append((index, 'lower'))
        if upper > report.max_upper_gap:
            report.max_upper_gap = upper
            report.worst_pairs.append((index, 'upper'))
        report.samples += 1

    if not report.consistent:
        logger.warning("Model sandwich violated: lower=%.3e upper=%.3e over %d samples",
                       report.max_lower_gap, report.max_upper_gap, report.samples)
    return report


def entropic_model(cost_vector: Sequence[float], lipschitz: float = 1.0) -> InexactModel:
    """Exact model of the linear objective <c, x> on the simplex with the KL setup."""
    cost = np.asarray(cost_vector, dtype=float)
    return InexactModel.from_gradient(
        objective=lambda x: float(np.dot(cost, x)),
        gradient=lambda y: cost,
        bregman=NegativeEntropy(),
        lipschitz=lipschitz,
    )
