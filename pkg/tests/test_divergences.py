import math

import numpy as np
import pytest
from scipy import stats

from glshift.distributions import DiscreteDistribution, MixtureDensity, QuadratureGrid
from glshift.divergences import generalized_js, js_continuous, kl_divergence, tv_continuous, tv_distance
from glshift.errors import QuadratureError, ValidationError


def test_kl_divergence() -> None:
    p = DiscreteDistribution([0.5, 0.5, 0.0])
    q = DiscreteDistribution([0.25, 0.25, 0.5])

    assert kl_divergence(p, p) == 0.0
    assert math.isclose(kl_divergence(p, q), math.log(2))
    assert kl_divergence(q, p) == math.inf


def test_js_of_disjoint_distributions_is_ln2() -> None:
    p = DiscreteDistribution([1.0, 0.0])
    q = DiscreteDistribution([0.0, 1.0])

    assert math.isclose(generalized_js(p, q), math.log(2))
    assert generalized_js(p, p) == 0.0


def test_generalized_js_is_bounded_by_entropy_of_mixing() -> None:
    p = DiscreteDistribution([1.0, 0.0])
    q = DiscreteDistribution([0.0, 1.0])
    c = 0.2

    expected = -(1 - c) * math.log(1 - c) - c * math.log(c)

    assert math.isclose(generalized_js(p, q, c), expected)


def test_generalized_js_rejects_bad_mixing_constant() -> None:
    p = DiscreteDistribution([0.5, 0.5])

    for c in (0.0, 1.0, -0.1):
        with pytest.raises(ValidationError):
            generalized_js(p, p, c)


def test_tv_distance() -> None:
    p = DiscreteDistribution([0.6, 0.4])
    q = DiscreteDistribution([0.4, 0.6])

    assert math.isclose(tv_distance(p, q), 0.2)

    with pytest.raises(ValidationError):
        tv_distance(p, DiscreteDistribution([1.0]))


def test_tv_continuous_of_unit_gaussians() -> None:
    a = MixtureDensity.gaussian([0.0], [[1.0]])
    b = MixtureDensity.gaussian([1.0], [[1.0]])

    estimate = tv_continuous(a, b)

    assert abs(estimate.value - (2 * stats.norm.cdf(0.5) - 1)) < 1e-5
    assert estimate.error < 1e-4


def test_tv_continuous_refinement_converges() -> None:
    a = MixtureDensity.gaussian([0.0], [[1.0]])
    b = MixtureDensity.gaussian([2.0], [[1.0]])
    exact = 2 * stats.norm.cdf(1.0) - 1

    coarse = tv_continuous(a, b, QuadratureGrid.for_mixtures(a, b, points=8193))
    fine = tv_continuous(a, b, QuadratureGrid.for_mixtures(a, b, points=16385))

    assert abs(fine.value - exact) <= abs(coarse.value - exact) + 1e-12
    assert abs(fine.value - exact) < 1e-6


def test_tv_continuous_in_two_dimensions() -> None:
    a = MixtureDensity.gaussian([0.0, 0.0], np.eye(2))
    b = MixtureDensity.gaussian([1.0, 0.0], np.eye(2))

    estimate = tv_continuous(a, b)

    assert abs(estimate.value - (2 * stats.norm.cdf(0.5) - 1)) < 1e-3


def test_js_continuous() -> None:
    a = MixtureDensity.gaussian([0.0], [[1.0]])
    b = MixtureDensity.gaussian([50.0], [[1.0]])

    assert js_continuous(a, a).value < 1e-12
    assert abs(js_continuous(a, b).value - math.log(2)) < 1e-6


def test_grid_must_hold_the_mass() -> None:
    a = MixtureDensity.gaussian([0.0], [[1.0]])
    b = MixtureDensity.gaussian([1.0], [[1.0]])

    with pytest.raises(QuadratureError):
        tv_continuous(a, b, QuadratureGrid([-1.0], [1.0], 101))


def test_continuous_divergences_need_equal_dimensions() -> None:
    a = MixtureDensity.gaussian([0.0], [[1.0]])
    b = MixtureDensity.gaussian([0.0, 0.0], np.eye(2))

    with pytest.raises(ValidationError):
        tv_continuous(a, b)


def test_identities_on_random_simplex_pairs() -> None:
    rng = np.random.default_rng(0)

    for _ in range(1000):
        k = int(rng.integers(2, 6))
        p, q = DiscreteDistribution(rng.dirichlet(np.ones(k))), DiscreteDistribution(rng.dirichlet(np.ones(k)))
        c = float(rng.uniform(0.05, 0.95))

        kl, tv, js = kl_divergence(p, q), tv_distance(p, q), generalized_js(p, q)
        assert kl >= 0 and tv >= 0 and js >= 0
        assert abs(tv - tv_distance(q, p)) < 1e-9
        assert abs(js - generalized_js(q, p)) < 1e-9
        assert js <= math.log(2) + 1e-9
        assert abs(generalized_js(p, q, c) - generalized_js(q, p, 1 - c)) < 1e-9
        # Pinsker
        assert tv <= math.sqrt(kl / 2) + 1e-9


def test_spot_values() -> None:
    p = DiscreteDistribution([0.6, 0.4])
    q = DiscreteDistribution([0.4, 0.6])

    assert abs(kl_divergence(p, q) - 0.2 * math.log(1.5)) < 1e-12
    assert abs(kl_divergence(p, q) - 0.08109) < 1e-5
    assert abs(tv_distance(p, q) - 0.2) < 1e-9
    assert abs(generalized_js(DiscreteDistribution([1.0, 0.0]), DiscreteDistribution([0.0, 1.0])) - math.log(2)) < 1e-9
