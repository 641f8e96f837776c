"""
Divergences between label distributions and between low-dimensional mixture densities.

Natural logarithms throughout. Continuous versions integrate on a QuadratureGrid and return a
QuadratureEstimate carrying the grid-refinement error.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
from numpy.typing import NDArray
from scipy.special import rel_entr

from glshift.distributions import (
    DiscreteDistribution,
    MixtureDensity,
    QuadratureEstimate,
    QuadratureGrid,
    check_mass,
)
from glshift.errors import ValidationError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


def kl_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """
    KL(p || q) = sum_i p_i ln(p_i / q_i), with 0 ln 0 = 0.

    Returns:
        the divergence, or ``math.inf`` when p puts mass where q has none
    """
    _check_same_classes(p, q)
    if np.any((q.probs == 0) & (p.probs > 0)):
        return math.inf
    return max(float(np.sum(rel_entr(p.probs, q.probs))), 0.0)


def generalized_js(p: DiscreteDistribution, q: DiscreteDistribution, c: float = 0.5) -> float:
    """
    (1 - c) KL(p || m) + c KL(q || m) with m = (1 - c) p + c q.

    c = 1/2 gives the usual Jensen-Shannon divergence, bounded by ln 2.
    """
    _check_same_classes(p, q)
    _check_mixing_constant(c)
    m = (1 - c) * p.probs + c * q.probs
    value = (1 - c) * np.sum(rel_entr(p.probs, m)) + c * np.sum(rel_entr(q.probs, m))
    return max(float(value), 0.0)


def tv_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    _check_same_classes(p, q)
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def tv_continuous(a: MixtureDensity, b: MixtureDensity, grid: QuadratureGrid | None = None) -> QuadratureEstimate:
    """
    Total variation (1/2) int |a - b| between two densities of dimension at most 3.

    Args:
        a, b: mixture densities of equal dimension
        grid: integration grid; by default the +-8 sigma box over both mixtures

    Raises:
        QuadratureError: dimension above 3 or a grid that misses more than 1e-6 of either mass
    """

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        pa, pb = a.pdf(z), b.pdf(z)
        return np.column_stack([0.5 * np.abs(pa - pb), pa, pb])

    return _integrate_checked(integrand, a, b, grid)


def js_continuous(
    a: MixtureDensity,
    b: MixtureDensity,
    c: float = 0.5,
    grid: QuadratureGrid | None = None,
) -> QuadratureEstimate:
    """Generalized JS divergence of two densities; same grid rules as tv_continuous."""
    _check_mixing_constant(c)

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        pa, pb = a.pdf(z), b.pdf(z)
        m = (1 - c) * pa + c * pb
        value = (1 - c) * rel_entr(pa, m) + c * rel_entr(pb, m)
        return np.column_stack([value, pa, pb])

    estimate = _integrate_checked(integrand, a, b, grid)
    estimate.value = max(estimate.value, 0.0)
    return estimate


def _integrate_checked(
    integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    a: MixtureDensity,
    b: MixtureDensity,
    grid: QuadratureGrid | None,
) -> QuadratureEstimate:
    if a.dim != b.dim:
        raise ValidationError(f"densities disagree on dimension: {a.dim} vs {b.dim}")
    if grid is None:
        grid = QuadratureGrid.for_mixtures(a, b)
    elif grid.dim != a.dim:
        raise ValidationError(f"grid has dimension {grid.dim}, densities have {a.dim}")
    fine, error = grid.estimate(integrand)
    check_mass(fine[1:])
    return QuadratureEstimate(float(fine[0]), float(error[0]))


def _check_same_classes(p: DiscreteDistribution, q: DiscreteDistribution) -> None:
    if len(p) != len(q):
        raise ValidationError(f"distributions have {len(p)} and {len(q)} classes")


def _check_mixing_constant(c: float) -> None:
    if not 0.0 < c < 1.0:
        raise ValidationError(f"mixing constant must lie in (0, 1), got {c}")
