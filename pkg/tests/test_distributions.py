import numpy as np
import pytest

from glshift.distributions import (
    DiscreteDistribution,
    GaussianComponent,
    MixtureDensity,
    QuadratureGrid,
    check_mass,
    combine_mixtures,
)
from glshift.errors import QuadratureError, ValidationError


def test_discrete_distribution_rejects_non_simplex() -> None:
    with pytest.raises(ValidationError):
        DiscreteDistribution([0.5, 0.6])
    with pytest.raises(ValidationError):
        DiscreteDistribution([1.5, -0.5])
    with pytest.raises(ValidationError):
        DiscreteDistribution([])


def test_discrete_distribution_is_read_only() -> None:
    p = DiscreteDistribution([0.25, 0.75])

    with pytest.raises(ValueError):  # noqa: PT011
        p.probs[0] = 0.5


def test_from_labels() -> None:
    p = DiscreteDistribution.from_labels([0, 2, 2, 1], 4)

    assert p.to_list() == [0.25, 0.25, 0.5, 0.0]

    with pytest.raises(ValidationError):
        DiscreteDistribution.from_labels([0, 4], 4)


def test_gaussian_component_needs_positive_definite_covariance() -> None:
    with pytest.raises(ValidationError):
        GaussianComponent([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_mixture_sampling_is_deterministic() -> None:
    mixture = MixtureDensity(
        [GaussianComponent([0.0], [[1.0]]), GaussianComponent([5.0], [[0.25]])], [0.3, 0.7]
    )

    a = mixture.sample(100, np.random.default_rng(3))
    b = mixture.sample(100, np.random.default_rng(3))

    assert a.shape == (100, 1)
    assert np.array_equal(a, b)


def test_combine_mixtures_density() -> None:
    f0 = MixtureDensity.gaussian([0.0], [[1.0]])
    f1 = MixtureDensity.gaussian([3.0], [[1.0]])
    weights = DiscreteDistribution([0.6, 0.4])
    points = np.linspace(-3, 6, 20)[:, None]

    combined = combine_mixtures([f0, f1], weights)

    assert np.allclose(combined.pdf(points), 0.6 * f0.pdf(points) + 0.4 * f1.pdf(points))


def test_quadrature_integrates_gaussian_mass() -> None:
    for dim in (1, 2, 3):
        mixture = MixtureDensity.gaussian(np.zeros(dim), np.eye(dim))
        grid = QuadratureGrid.for_mixtures(mixture, points=64 if dim == 3 else None)

        mass = grid.integrate(mixture.pdf)

        assert mass.shape == ()
        assert abs(float(mass) - 1.0) < 1e-6


def test_quadrature_vector_integrand() -> None:
    mixture = MixtureDensity.gaussian([1.0], [[4.0]])
    grid = QuadratureGrid.for_mixtures(mixture)

    mass, mean, second = grid.integrate(
        lambda z: np.column_stack([mixture.pdf(z), z[:, 0] * mixture.pdf(z), z[:, 0] ** 2 * mixture.pdf(z)])
    )

    assert abs(mass - 1.0) < 1e-8
    assert abs(mean - 1.0) < 1e-8
    assert abs(second - 5.0) < 1e-6


def test_quadrature_is_limited_to_three_dimensions() -> None:
    with pytest.raises(QuadratureError):
        QuadratureGrid(np.zeros(4), np.ones(4), 8)
    with pytest.raises(QuadratureError):
        QuadratureGrid.for_mixtures(MixtureDensity.gaussian(np.zeros(4), np.eye(4)))


def test_coarsened_and_refined_grids() -> None:
    grid = QuadratureGrid([0.0], [1.0], 9)

    assert grid.coarsened().points == (5,)
    assert grid.refined().points == (17,)
    assert np.array_equal(grid.coarsened().axes[0], grid.axes[0][::2])


def test_quadrature_is_reproducible() -> None:
    mixture = MixtureDensity.gaussian([0.0, 0.0], [[1.0, 0.3], [0.3, 1.0]])
    grid = QuadratureGrid.for_mixtures(mixture, points=200)

    assert grid.integrate(mixture.pdf) == grid.integrate(mixture.pdf)


def test_check_mass() -> None:
    check_mass([1.0, 1.0 - 1e-7])

    with pytest.raises(QuadratureError):
        check_mass([1.0, 0.99])
