"""
Electoral clustering module for the optimization toolkit.
Handles the entropy-regularized party potential on S_n(1) x R_+^m, its two
inexact models and the closed-form blockwise subproblem solver.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from services.bregman_core import ClusteringDivergence, ProductPoint, kl_divergence, neg_entropy
from services.gradient_methods import (
    GMConfig, GMResult, gm_adaptive, gm_adaptive_strongly_convex, gm_fixed,
)
from services.model_oracle import InexactModel, SubproblemSolution, SubproblemSolver
from utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

Z_FLOOR = 1e-12
METHODS = ('fixed', 'adaptive', 'adaptive_strongly_convex')

GFunction = Callable[[np.ndarray, np.ndarray], float]
GGradient = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class ClusteringProblem:
    """
    f(z, p) = g(z, p) + mu1 * sum z ln z + mu2/2 * ||p||^2.

    g has an Lg-Lipschitz gradient in the norm sqrt(||z||_1^2 + ||p||_2^2).
    """

    g: GFunction
    grad_g: GGradient
    Lg: float
    mu1: float
    mu2: float
    n: int
    m: int
    name: str = 'custom'

    def __post_init__(self):
        if not self.Lg > 0:
            raise InvalidInputError("Lg must be positive")
        if self.Lg > self.mu1 or self.Lg > self.mu2:
            raise InvalidInputError(
                f"Need Lg <= mu1 and Lg <= mu2 (Lg={self.Lg}, mu1={self.mu1}, mu2={self.mu2})"
            )
        self.bregman = ClusteringDivergence(self.n, self.m)

    @property
    def strong_margin(self) -> float:
        return min(self.mu1, self.mu2) - self.Lg

    def split(self, x) -> Tuple[np.ndarray, np.ndarray]:
        if isinstance(x, ProductPoint):
            return np.asarray(x.z, dtype=float), np.asarray(x.p, dtype=float)
        return self.bregman.split(x)


def make_g(name: str, n: int, m: int, opinions: Optional[np.ndarray] = None, scale: float = 1.0,
           linear_z: Optional[np.ndarray] = None, linear_p: Optional[np.ndarray] = None,
           Lg: Optional[float] = None) -> Tuple[GFunction, GGradient, float]:
    """
    Build g, its gradient and a certified Lipschitz constant.

    Registry:
        zero      g = 0 (Lg defaults to 1e-6)
        linear    g = <a, z> + <b, p> with user constants (Lg defaults to 1e-6)
        quadratic g = scale/2 * ||p - O^T z||^2 for voter opinions O (rows),
                  Lg = scale * (1 + max_i ||o_i||^2)

    Returns:
        Tuple of (g, grad_g, Lg)
    """
    if name == 'zero':
        def g(z, p):
            return 0.0

        def grad(z, p):
            return np.zeros(n), np.zeros(m)

        return g, grad, Lg or 1e-6

    if name == 'linear':
        a = np.zeros(n) if linear_z is None else np.asarray(linear_z, dtype=float)
        b = np.zeros(m) if linear_p is None else np.asarray(linear_p, dtype=float)
        if a.size != n or b.size != m:
            raise InvalidInputError("Linear g coefficients have the wrong size")

        def g(z, p):
            return float(np.dot(a, z) + np.dot(b, p))

        def grad(z, p):
            return a, b

        return g, grad, Lg or 1e-6

    if name == 'quadratic':
        O = np.zeros((n, m)) if opinions is None else np.asarray(opinions, dtype=float)
        if O.shape != (n, m):
            raise InvalidInputError(f"Opinion matrix must be {n}x{m}, got {O.shape}")
        if not scale > 0:
            raise InvalidInputError("Quadratic scale must be positive")
        certified = scale * (1.0 + float(np.max(np.sum(O ** 2, axis=1))))

        def g(z, p):
            residual = p - O.T @ z
            return 0.5 * scale * float(np.dot(residual, residual))

        def grad(z, p):
            residual = scale * (p - O.T @ z)
            return -O @ residual, residual

        return g, grad, max(Lg or 0.0, certified)

    raise InvalidInputError(f"Unknown g: {name}")


def potential(prob: ClusteringProblem, x) -> float:
    """g(x) + mu1 * sum z ln z + mu2/2 * ||p||^2 (0 ln 0 = 0)."""
    z, p = prob.split(x)
    return float(prob.g(z, p) + prob.mu1 * neg_entropy(z) + 0.5 * prob.mu2 * float(np.dot(p, p)))


def _linear_term(prob: ClusteringProblem, x, y) -> float:
    zx, px = prob.split(x)
    zy, py = prob.split(y)
    gz, gp = prob.grad_g(zy, py)
    return float(np.dot(gz, zx - zy) + np.dot(gp, px - py))


def clustering_model(prob: ClusteringProblem, x, y) -> float:
    """
    The (0, 2Lg)-model

    <grad g(y), x - y> - Lg KL(z_x|z_y) - Lg/2 ||p_x - p_y||^2
        + mu1 (sum z_x ln z_x - sum z_y ln z_y) + mu2/2 (||p_x||^2 - ||p_y||^2).
    """
    zx, px = prob.split(x)
    zy, py = prob.split(y)
    if np.any(zy <= 0):
        raise InvalidInputError("Anchor z has a zero entry")
    dp = px - py
    return (
        _linear_term(prob, x, y)
        - prob.Lg * kl_divergence(zx, zy)
        - 0.5 * prob.Lg * float(np.dot(dp, dp))
        + prob.mu1 * (neg_entropy(zx) - neg_entropy(zy))
        + 0.5 * prob.mu2 * (float(np.dot(px, px)) - float(np.dot(py, py)))
    )


def clustering_linear_model(prob: ClusteringProblem, x, y) -> float:
    """
    The (0, max mu + Lg, min mu - Lg)-model

    <grad g(y), x - y> + mu1 <ln z_y + 1, z_x - z_y> + mu2 <p_y, p_x - p_y>.
    """
    if prob.strong_margin <= 0:
        raise InvalidInputError("The linear model needs min(mu1, mu2) > Lg")
    zx, px = prob.split(x)
    zy, py = prob.split(y)
    if np.any(zy <= 0):
        raise InvalidInputError("Anchor z has a zero entry")
    return (
        _linear_term(prob, x, y)
        + prob.mu1 * float(np.dot(np.log(zy) + 1.0, zx - zy))
        + prob.mu2 * float(np.dot(py, px - py))
    )


def project_p_block(a: np.ndarray, c: float, anchor: np.ndarray) -> np.ndarray:
    """Minimizer of <a, p> + c/2 ||p - anchor||^2 over p >= 0."""
    return np.maximum(anchor - a / c, 0.0)


def entropic_z_block(a: np.ndarray, c: float, anchor: np.ndarray) -> np.ndarray:
    """Minimizer of <a, z> + c KL(z|anchor) over the simplex, floored at Z_FLOOR."""
    logits = np.log(anchor) - a / c
    z = np.exp(logits - logits.max())
    z /= z.sum()
    z = np.maximum(z, Z_FLOOR)
    return z / z.sum()


class ClusteringSubproblemSolver(SubproblemSolver):
    """
    Blockwise closed form of psi(x, y) + beta V[y](x) for both clustering models.

    With the (0, 2Lg)-model the z-block weight is beta + mu1 - Lg and the
    p-block weight beta + mu2 - Lg; with the linear model both weights are beta.
    """

    def __init__(self, prob: ClusteringProblem, linear: bool = False):
        self.prob = prob
        self.linear = linear

    def solve(self, model: InexactModel, anchor, weight: float,
              target_precision: float = 0.0) -> SubproblemSolution:
        prob = self.prob
        if weight <= 0:
            raise InvalidInputError("Subproblem weight must be positive")
        zy, py = prob.split(anchor)
        gz, gp = prob.grad_g(zy, py)
        a_p = gp + prob.mu2 * py
        if self.linear:
            a_z = gz + prob.mu1 * (np.log(zy) + 1.0)
            c_z = c_p = weight
        else:
            a_z = gz + prob.mu1 * np.log(zy)
            c_z = weight + prob.mu1 - prob.Lg
            c_p = weight + prob.mu2 - prob.Lg
        z = entropic_z_block(a_z, c_z, zy)
        p = project_p_block(a_p, c_p, py)
        return SubproblemSolution(np.concatenate([z, p]), 0.0)


def build_model(prob: ClusteringProblem, linear: bool = False) -> InexactModel:
    """The clustering model as an InexactModel over flat (z, p) vectors."""
    objective = lambda x: potential(prob, x)
    if linear:
        if prob.strong_margin <= 0:
            raise InvalidInputError("The linear model needs min(mu1, mu2) > Lg")
        return InexactModel(
            evaluate=lambda x, y: clustering_linear_model(prob, x, y),
            delta=0.0,
            lipschitz=max(prob.mu1, prob.mu2) + prob.Lg,
            bregman=prob.bregman,
            mu=prob.strong_margin,
            objective=objective,
        )
    return InexactModel(
        evaluate=lambda x, y: clustering_model(prob, x, y),
        delta=0.0,
        lipschitz=2.0 * prob.Lg,
        bregman=prob.bregman,
        objective=objective,
    )


def solve_clustering(prob: ClusteringProblem, x0: ProductPoint, config: GMConfig, method: str = 'fixed',
                     n_iters: Optional[int] = None, reference=None) -> GMResult:
    """
    Run a gradient method on the clustering potential.

    fixed and adaptive use the (0, 2Lg)-model; adaptive_strongly_convex uses
    the linear model with mu = min(mu1, mu2) - Lg.

    Args:
        prob: clustering problem
        x0: starting point
        config: method settings
        method: 'fixed', 'adaptive' or 'adaptive_strongly_convex'
        n_iters: iterations (defaults to config.max_iters)
        reference: optional minimizer as a flat vector or ProductPoint

    Returns:
        GMResult over flat (z, p) vectors
    """
    if method not in METHODS:
        raise InvalidInputError(f"Unknown clustering method: {method}")
    start = ProductPoint.create(x0.z, x0.p)
    x = start.to_vector()
    x[:prob.n] = np.maximum(x[:prob.n], Z_FLOOR)
    x[:prob.n] /= x[:prob.n].sum()
    if isinstance(reference, ProductPoint):
        reference = reference.to_vector()
    iterations = n_iters or config.max_iters
    linear = method == 'adaptive_strongly_convex'
    model = build_model(prob, linear=linear)
    solver = ClusteringSubproblemSolver(prob, linear=linear)
    logger.info("Clustering run: method=%s n=%d m=%d Lg=%.6g", method, prob.n, prob.m, prob.Lg)
    if method == 'fixed':
        return gm_fixed(model, solver, x, config, iterations, reference=reference)
    if method == 'adaptive':
        return gm_adaptive(model, solver, x, config, iterations, reference=reference)
    sc_config = config if config.mu is not None else GMConfig(
        L0=max(config.L0, 2.0 * model.mu), delta=config.delta, delta_tilde=config.delta_tilde,
        mu=model.mu, max_iters=config.max_iters, max_inner_attempts=config.max_inner_attempts,
    )
    return gm_adaptive_strongly_convex(model, solver, x, sc_config, iterations, reference=reference)


def random_product_point(rng: np.random.Generator, n: int, m: int, scale: float = 1.0) -> np.ndarray:
    """Flat (z, p) vector with z ~ Dirichlet(1) and p ~ U[0, scale]^m."""
    z = rng.dirichlet(np.ones(n))
    z = np.maximum(z, Z_FLOOR)
    return np.concatenate([z / z.sum(), rng.uniform(0.0, scale, size=m)])
