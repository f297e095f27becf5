"""
Bregman core module for the optimization toolkit.
Simplex vectors, product points and the Bregman-divergence setups every solver consumes.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import rel_entr, xlogy

from utils.errors import InvalidInputError

NORMALIZATION_TOLERANCE = 1e-6
DENOMINATOR_FLOOR = 1e-300
DOMAIN_TOLERANCE = 1e-9


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ProbabilityVector:
    """A point on the standard simplex."""

    entries: np.ndarray

    @classmethod
    def from_array(cls, values, tolerance: float = NORMALIZATION_TOLERANCE) -> 'ProbabilityVector':
        """
        Build a probability vector, rescaling small normalization errors.

        Args:
            values: nonnegative entries
            tolerance: largest |sum - 1| that is silently rescaled

        Returns:
            ProbabilityVector summing to one
        """
        array = np.asarray(values, dtype=float).ravel()
        if array.size == 0:
            raise InvalidInputError("Probability vector must be nonempty")
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise InvalidInputError("Probability vector entries must be finite and nonnegative")
        total = array.sum()
        if abs(total - 1.0) > tolerance:
            raise InvalidInputError(f"Probability vector sums to {total!r}, not 1")
        return cls(_frozen_array(array / total))

    @classmethod
    def uniform(cls, n: int) -> 'ProbabilityVector':
        return cls(_frozen_array(np.full(n, 1.0 / n)))

    @property
    def dim(self) -> int:
        return int(self.entries.size)

    def is_positive(self) -> bool:
        return bool(np.all(self.entries > 0))


@dataclass(frozen=True)
class ProductPoint:
    """
    A point x = (z, p) of S_n(1) x R_+^m.

    Arithmetic (differences, sums) produces unchecked points, which is
    what the product norm is evaluated on.
    """

    z: np.ndarray
    p: np.ndarray

    @classmethod
    def create(cls, z, p) -> 'ProductPoint':
        """Validated constructor: z on the simplex, p nonnegative."""
        z_vec = ProbabilityVector.from_array(z).entries
        p_vec = np.asarray(p, dtype=float).ravel()
        if not np.all(np.isfinite(p_vec)) or np.any(p_vec < 0):
            raise InvalidInputError("Party position p must be finite and nonnegative")
        return cls(z_vec, _frozen_array(p_vec))

    @classmethod
    def from_vector(cls, vector: np.ndarray, n: int) -> 'ProductPoint':
        vector = np.asarray(vector, dtype=float)
        return cls(_frozen_array(vector[:n]), _frozen_array(vector[n:]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.z, self.p])

    def __add__(self, other: 'ProductPoint') -> 'ProductPoint':
        return ProductPoint(self.z + other.z, self.p + other.p)

    def __sub__(self, other: 'ProductPoint') -> 'ProductPoint':
        return ProductPoint(self.z - other.z, self.p - other.p)


def kl_divergence(a, b) -> float:
    """
    KL(a|b) = sum a_k ln(a_k / b_k) with the convention 0 ln 0 = 0.

    Args:
        a: nonnegative vector
        b: positive vector of the same dimension

    Returns:
        The divergence (nonnegative when both are on the simplex)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"Dimension mismatch: {a.shape} vs {b.shape}")
    if np.any(a < 0):
        raise InvalidInputError("KL numerator must be nonnegative")
    if np.any(b < DENOMINATOR_FLOOR):
        raise InvalidInputError("KL denominator has a nonpositive or underflowing entry")
    return float(np.sum(rel_entr(a, b)))


def neg_entropy(x) -> float:
    """sum x ln x with 0 ln 0 = 0."""
    return float(np.sum(xlogy(x, x)))


class BregmanSetup(ABC):
    """Prox-function d with its divergence V[y](x) = d(x) - d(y) - <grad d(y), x - y>."""

    domain: str = ''

    @abstractmethod
    def prox_value(self, x: np.ndarray) -> float:
        """d(x), shifted so that its minimum over the domain is 0."""

    @abstractmethod
    def prox_gradient(self, y: np.ndarray) -> np.ndarray:
        """grad d(y)."""

    @abstractmethod
    def contains(self, x: np.ndarray) -> bool:
        """Domain membership up to a small tolerance."""

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        """V[y](x); subclasses override with closed forms."""
        return bregman(self, x, y)


class SquaredEuclidean(BregmanSetup):
    """d(x) = ||x||^2 / 2 on the whole space, a centered ball or the nonnegative orthant."""

    def __init__(self, domain: str = 'space', radius: float = 1.0):
        if domain not in ('space', 'ball', 'orthant'):
            raise InvalidInputError(f"Unknown Euclidean domain: {domain}")
        if domain == 'ball' and not radius > 0:
            raise InvalidInputError("Ball radius must be positive")
        self.domain = domain
        self.radius = float(radius)

    def prox_value(self, x: np.ndarray) -> float:
        return 0.5 * float(np.dot(x, x))

    def prox_gradient(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return False
        if self.domain == 'ball':
            return bool(np.linalg.norm(x) <= self.radius * (1.0 + DOMAIN_TOLERANCE))
        if self.domain == 'orthant':
            return bool(np.all(x >= -DOMAIN_TOLERANCE))
        return True

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * float(np.dot(diff, diff))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the domain."""
        x = np.asarray(x, dtype=float)
        if self.domain == 'ball':
            norm = np.linalg.norm(x)
            return x if norm <= self.radius else x * (self.radius / norm)
        if self.domain == 'orthant':
            return np.maximum(x, 0.0)
        return x


class NegativeEntropy(BregmanSetup):
    """d(x) = sum x ln x + ln n on the simplex; V is the KL divergence."""

    domain = 'simplex'

    def prox_value(self, x: np.ndarray) -> float:
        return neg_entropy(x) + np.log(len(x))

    def prox_gradient(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise InvalidInputError("Entropy gradient needs strictly positive entries")
        return np.log(y) + 1.0

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -DOMAIN_TOLERANCE) and abs(x.sum() - 1.0) <= DOMAIN_TOLERANCE)

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        return kl_divergence(x, y)


class ClusteringDivergence(BregmanSetup):
    """
    Mixed setup on S_n(1) x R_+^m for flat vectors (z, p).

    d(z, p) = sum z ln z + ln n + ||p||^2 / 2, so that
    V[y](x) = KL(z_x|z_y) + ||p_x - p_y||^2 / 2.
    """

    domain = 'product'

    def __init__(self, n: int, m: int):
        if n <= 0 or m < 0:
            raise InvalidInputError("Clustering dimensions must satisfy n > 0, m >= 0")
        self.n = int(n)
        self.m = int(m)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.size != self.n + self.m:
            raise InvalidInputError(f"Expected a point of size {self.n + self.m}, got {x.size}")
        return x[:self.n], x[self.n:]

    def prox_value(self, x: np.ndarray) -> float:
        z, p = self.split(x)
        return neg_entropy(z) + np.log(self.n) + 0.5 * float(np.dot(p, p))

    def prox_gradient(self, y: np.ndarray) -> np.ndarray:
        z, p = self.split(y)
        if np.any(z <= 0):
            raise InvalidInputError("Entropy gradient needs strictly positive entries")
        return np.concatenate([np.log(z) + 1.0, p])

    def contains(self, x: np.ndarray) -> bool:
        z, p = self.split(x)
        return bool(
            np.all(z >= -DOMAIN_TOLERANCE)
            and abs(z.sum() - 1.0) <= DOMAIN_TOLERANCE
            and np.all(p >= -DOMAIN_TOLERANCE)
        )

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        zx, px = self.split(x)
        zy, py = self.split(y)
        diff = px - py
        return kl_divergence(zx, zy) + 0.5 * float(np.dot(diff, diff))


def bregman(setup: BregmanSetup, x, y) -> float:
    """
    V[y](x) = d(x) - d(y) - <grad d(y), x - y>, evaluated from the prox-function.

    Args:
        setup: Bregman setup
        x: point in the setup domain
        y: anchor point in the setup domain

    Returns:
        Nonnegative divergence value
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not setup.contains(x) or not setup.contains(y):
        raise InvalidInputError(f"Point outside the {setup.domain} domain")
    value = setup.prox_value(x) - setup.prox_value(y) - float(np.dot(setup.prox_gradient(y), x - y))
    return max(value, 0.0)


def product_norm(x: ProductPoint) -> float:
    """sqrt(||z||_1^2 + ||p||_2^2)."""
    z_norm = float(np.sum(np.abs(x.z)))
    return float(np.sqrt(z_norm ** 2 + float(np.dot(x.p, x.p))))
