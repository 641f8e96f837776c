"""
Probability objects shared by the oracles: label distributions, Gaussian mixtures and the
tensor-grid quadrature used to integrate over them.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.special import logsumexp

from glshift.errors import QuadratureError, ValidationError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

SIMPLEX_TOLERANCE = 1e-12
MAX_QUADRATURE_DIM = 3
DEFAULT_GRID_POINTS = {1: 4096, 2: 512, 3: 128}
GRID_WIDTH = 8.0
MASS_TOLERANCE = 1e-6


class DiscreteDistribution:
    """
    Probability vector on K classes.

    The stored array is read-only; build a new distribution instead of editing one.
    """

    def __init__(self, probs: ArrayLike) -> None:
        values = np.array(probs, dtype=float)
        if values.ndim != 1 or len(values) == 0:
            raise ValidationError(f"probabilities must be a non-empty vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError(f"probabilities must be finite and non-negative: {values.tolist()}")
        if abs(values.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ValidationError(f"probabilities sum to {values.sum():.15g}, not 1")
        values.setflags(write=False)
        self._probs = values

    @classmethod
    def from_counts(cls, counts: ArrayLike) -> DiscreteDistribution:
        values = np.asarray(counts, dtype=float)
        total = values.sum()
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero count vector")
        return cls(values / total)

    @classmethod
    def from_labels(cls, labels: ArrayLike, n_classes: int) -> DiscreteDistribution:
        """Empirical frequencies of integer labels in [0, n_classes)."""
        y = np.asarray(labels)
        if len(y) == 0:
            raise ValidationError("cannot build a label distribution from zero labels")
        if np.any(y < 0) or np.any(y >= n_classes):
            raise ValidationError(f"labels must lie in [0, {n_classes})")
        return cls.from_counts(np.bincount(y, minlength=n_classes))

    @classmethod
    def uniform(cls, n_classes: int) -> DiscreteDistribution:
        return cls(np.full(n_classes, 1.0 / n_classes))

    @property
    def probs(self) -> NDArray[np.float64]:
        return self._probs

    @property
    def n_classes(self) -> int:
        return len(self._probs)

    def __len__(self) -> int:
        return len(self._probs)

    def __getitem__(self, index: int) -> float:
        return float(self._probs[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self._probs, other._probs)

    def __hash__(self) -> int:
        return hash(self._probs.tobytes())

    def __repr__(self) -> str:
        return f"DiscreteDistribution({self._probs.tolist()})"

    def to_list(self) -> list[float]:
        return self._probs.tolist()


class GaussianComponent:
    """Multivariate normal with a symmetric positive-definite covariance."""

    def __init__(self, mean: ArrayLike, covariance: ArrayLike) -> None:
        mu = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(covariance, dtype=float).reshape(len(mu), len(mu))
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValidationError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ValidationError(f"covariance is not positive-definite: {cov.tolist()}") from e
        mu.setflags(write=False)
        cov.setflags(write=False)
        self.mean = mu
        self.covariance = cov
        self._chol = chol
        self._dist = stats.multivariate_normal(mean=mu, cov=cov)

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def marginal_std(self) -> NDArray[np.float64]:
        return np.sqrt(np.diag(self.covariance))

    def logpdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.atleast_1d(self._dist.logpdf(points)).reshape(len(points))

    def pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.atleast_1d(self._dist.pdf(points)).reshape(len(points))

    def sample(self, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def affine_pushforward(self, matrix: NDArray[np.float64], offset: NDArray[np.float64]) -> GaussianComponent:
        """Law of ``matrix @ x + offset``; needs a full-row-rank matrix to stay a density."""
        return GaussianComponent(matrix @ self.mean + offset, matrix @ self.covariance @ matrix.T)

    def same_as(self, other: GaussianComponent) -> bool:
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.covariance, other.covariance)

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GaussianComponent:
        return cls(data["mean"], data["covariance"])


class MixtureDensity:
    """
    Finite Gaussian mixture; a single component is the usual class conditional.
    """

    def __init__(self, components: Sequence[GaussianComponent], weights: DiscreteDistribution | ArrayLike | None = None) -> None:
        if len(components) == 0:
            raise ValidationError("a mixture needs at least one component")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValidationError(f"mixture components disagree on dimension: {sorted(dims)}")
        if weights is None:
            weights = DiscreteDistribution.uniform(len(components))
        elif not isinstance(weights, DiscreteDistribution):
            weights = DiscreteDistribution(weights)
        if len(weights) != len(components):
            raise ValidationError("one weight per mixture component is required")
        self.components = tuple(components)
        self.weights = weights

    @classmethod
    def gaussian(cls, mean: ArrayLike, covariance: ArrayLike) -> MixtureDensity:
        return cls([GaussianComponent(mean, covariance)])

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def component_logpdfs(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """(n, n_components) matrix of log(weight_k * pdf_k)."""
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights.probs)
        return np.column_stack([c.logpdf(points) for c in self.components]) + log_w

    def logpdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return logsumexp(self.component_logpdfs(points), axis=1)

    def pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.exp(self.logpdf(points))

    def sample(self, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
        if len(self.components) == 1:
            return self.components[0].sample(n, rng)
        which = rng.choice(len(self.components), size=n, p=self.weights.probs)
        out = np.empty((n, self.dim))
        for k, component in enumerate(self.components):
            rows = np.flatnonzero(which == k)
            out[rows] = component.sample(len(rows), rng)
        return out

    def affine_pushforward(self, matrix: ArrayLike, offset: ArrayLike) -> MixtureDensity:
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        b = np.asarray(offset, dtype=float).reshape(A.shape[0])
        if A.shape[1] != self.dim:
            raise ValidationError(f"affine map expects dimension {A.shape[1]}, mixture has {self.dim}")
        return MixtureDensity([c.affine_pushforward(A, b) for c in self.components], self.weights)

    def same_as(self, other: MixtureDensity) -> bool:
        return (
            len(self.components) == len(other.components)
            and self.weights == other.weights
            and all(a.same_as(b) for a, b in zip(self.components, other.components))
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.to_list(),
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MixtureDensity:
        return cls([GaussianComponent.from_dict(c) for c in data["components"]], data["weights"])


def combine_mixtures(mixtures: Sequence[MixtureDensity], weights: DiscreteDistribution) -> MixtureDensity:
    """Flatten ``sum_k weights[k] * mixtures[k]`` into a single mixture."""
    components: list[GaussianComponent] = []
    flat_weights: list[float] = []
    for w, mixture in zip(weights.probs, mixtures):
        components.extend(mixture.components)
        flat_weights.extend(w * mixture.weights.probs)
    return MixtureDensity(components, DiscreteDistribution.from_counts(flat_weights))


class QuadratureEstimate:
    """Quadrature value with the grid-refinement error estimate |fine - coarse|."""

    def __init__(self, value: float, error: float) -> None:
        self.value = value
        self.error = error

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"QuadratureEstimate(value={self.value!r}, error={self.error!r})"


class QuadratureGrid:
    """
    Tensor-product trapezoid rule on an axis-aligned box, at most three dimensions.

    The flattened grid is visited in fixed chunks of ``chunk_size`` nodes and the partial
    sums are added in chunk order, so results are reproducible bit for bit.
    """

    def __init__(
        self,
        lows: ArrayLike,
        highs: ArrayLike,
        points: int | Sequence[int] | None = None,
        chunk_size: int = 65536,
    ) -> None:
        lo = np.atleast_1d(np.asarray(lows, dtype=float))
        hi = np.atleast_1d(np.asarray(highs, dtype=float))
        dim = len(lo)
        if dim > MAX_QUADRATURE_DIM:
            raise QuadratureError(f"quadrature is limited to {MAX_QUADRATURE_DIM} dimensions, got {dim}")
        if len(hi) != dim or np.any(hi <= lo):
            raise QuadratureError("grid bounds must satisfy low < high on every axis")
        if points is None:
            points = DEFAULT_GRID_POINTS[dim]
        counts = [int(points)] * dim if np.isscalar(points) else [int(p) for p in points]  # type: ignore[arg-type]
        if len(counts) != dim or min(counts) < 3:
            raise QuadratureError("each axis needs at least 3 grid points")
        self.lows = lo
        self.highs = hi
        self.points = tuple(counts)
        self.chunk_size = chunk_size
        self.axes = [np.linspace(lo[i], hi[i], counts[i]) for i in range(dim)]
        self.axis_weights = [_trapezoid_weights(axis) for axis in self.axes]

    @classmethod
    def for_mixtures(
        cls,
        *mixtures: MixtureDensity,
        points: int | Sequence[int] | None = None,
        width: float = GRID_WIDTH,
    ) -> QuadratureGrid:
        """Box [mu_min - width*sigma_max, mu_max + width*sigma_max] per axis over all components."""
        dims = {m.dim for m in mixtures}
        if len(dims) != 1:
            raise ValidationError(f"mixtures disagree on dimension: {sorted(dims)}")
        dim = dims.pop()
        if dim > MAX_QUADRATURE_DIM:
            raise QuadratureError(f"quadrature is limited to {MAX_QUADRATURE_DIM} dimensions, got {dim}")
        means = np.array([c.mean for m in mixtures for c in m.components])
        sigma = np.array([c.marginal_std for m in mixtures for c in m.components]).max(axis=0)
        return cls(means.min(axis=0) - width * sigma, means.max(axis=0) + width * sigma, points)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def coarsened(self) -> QuadratureGrid:
        """Same box with about half the nodes per axis (every second node for odd counts)."""
        return QuadratureGrid(self.lows, self.highs, [(n + 1) // 2 for n in self.points], self.chunk_size)

    def refined(self) -> QuadratureGrid:
        return QuadratureGrid(self.lows, self.highs, [2 * n - 1 for n in self.points], self.chunk_size)

    def integrate(self, integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]]) -> NDArray[np.float64]:
        """
        Integrate a vectorized function over the box.

        Args:
            integrand: maps an (m, dim) array of nodes to an (m,) or (m, r) array

        Returns:
            array of r integrals (a 0-d array for scalar integrands)
        """
        total: NDArray[np.float64] | None = None
        for start in range(0, self.size, self.chunk_size):
            index = np.unravel_index(np.arange(start, min(start + self.chunk_size, self.size)), self.points)
            nodes = np.column_stack([self.axes[d][index[d]] for d in range(self.dim)])
            weights = np.prod([self.axis_weights[d][index[d]] for d in range(self.dim)], axis=0)
            values = np.asarray(integrand(nodes), dtype=float)
            partial = weights @ values
            total = partial if total is None else total + partial
        assert total is not None
        return total

    def estimate(self, integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Integrals on this grid and their refinement errors against the coarsened grid."""
        fine = self.integrate(integrand)
        coarse = self.coarsened().integrate(integrand)
        return fine, np.abs(fine - coarse)


def check_mass(masses: ArrayLike, tolerance: float = MASS_TOLERANCE) -> None:
    """Raise QuadratureError when a density has lost more than ``tolerance`` of its mass on the grid."""
    deficit = 1.0 - np.min(masses)
    if deficit > tolerance:
        raise QuadratureError(f"grid misses {deficit:.3e} of a density's mass (tolerance {tolerance:g})")


def _trapezoid_weights(axis: NDArray[np.float64]) -> NDArray[np.float64]:
    h = axis[1] - axis[0]
    weights = np.full(len(axis), h)
    weights[[0, -1]] = h / 2
    return weights
