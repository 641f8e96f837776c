from pathlib import Path

import numpy as np

from glshift.distributions import DiscreteDistribution, MixtureDensity
from glshift.model import DenseLayer, ModelParams
from glshift.shiftgen import DomainSpec, ShiftScenario, make_scenario

CONFIGS = Path(__file__).parent.parent / "configs"


def two_class_scenario(delta: float = 1.0, p_y: tuple = (0.6, 0.4), q_y: tuple = (0.4, 0.6), scale: float = 1.0) -> ShiftScenario:
    """1-D, two classes at 3 and 6, target classes moved right by delta."""
    return make_scenario(2, 1, delta, p_y, q_y, seed=0, scale=scale, directions=[[1.0], [1.0]])


def two_gaussians(mu0: float = 0.0, mu1: float = 2.0, priors: tuple = (0.5, 0.5)) -> DomainSpec:
    return DomainSpec(
        [MixtureDensity.gaussian([mu0], [[1.0]]), MixtureDensity.gaussian([mu1], [[1.0]])],
        DiscreteDistribution(priors),
    )


def identity_model(dim: int, n_classes: int, seed: int = 0) -> ModelParams:
    """Affine model with g(x) = x and a random linear head."""
    rng = np.random.default_rng(seed)
    layer = DenseLayer(np.eye(dim), np.zeros(dim), "identity")
    return ModelParams([layer], rng.normal(size=(dim, n_classes)), np.zeros(n_classes))


def numerical_gradient(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of an array."""
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[index] = eps
        grad[index] = (fn(x + step) - fn(x - step)) / (2 * eps)
    return grad
