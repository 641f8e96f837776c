"""
The representation g (a stack of dense layers) and the hypothesis h (linear softmax), with a
hand-written backward pass.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from glshift.errors import NonFiniteError, ValidationError
from glshift.utils.helpers import rng_stream

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

Activation = Literal["tanh", "leakyrelu", "identity"]
ACTIVATIONS: tuple[Activation, ...] = ("tanh", "leakyrelu", "identity")
LEAKY_SLOPE = 0.2

Array = NDArray[np.float64]


@dataclass
class DenseLayer:
    weight: Array  # (d_in, d_out)
    bias: Array  # (d_out,)
    activation: Activation = "tanh"

    def __post_init__(self) -> None:
        self.weight = np.array(self.weight, dtype=float, ndmin=2)
        self.bias = np.array(self.bias, dtype=float).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.bias.shape != (self.weight.shape[1],):
            raise ValidationError(f"bias of length {len(self.bias)} for {self.weight.shape[1]} units")

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]


class ModelParams:
    """
    Parameters of g (``g_layers``) and h (``h_weight`` of shape (d_z, K), ``h_bias``).

    Inputs are standardized as (x - input_mean) / input_scale before the first g layer. The
    standardization is fixed when the model is built and is not a trained parameter.

    Instances are treated as values: training builds new instances instead of editing one.
    """

    def __init__(
        self,
        g_layers: Sequence[DenseLayer],
        h_weight: ArrayLike,
        h_bias: ArrayLike,
        input_mean: ArrayLike | None = None,
        input_scale: ArrayLike | None = None,
    ) -> None:
        self.g_layers = list(g_layers)
        self.h_weight = np.array(h_weight, dtype=float, ndmin=2)
        self.h_bias = np.array(h_bias, dtype=float).reshape(-1)
        for i, (a, b) in enumerate(zip(self.g_layers, self.g_layers[1:])):
            if a.d_out != b.d_in:
                raise ValidationError(f"g layer {i} outputs {a.d_out} units, layer {i + 1} expects {b.d_in}")
        if self.h_weight.shape[0] != self.d_z or self.h_bias.shape != (self.h_weight.shape[1],):
            raise ValidationError(f"h expects inputs of size {self.h_weight.shape[0]}, g outputs {self.d_z}")
        d_in = self.d_in
        self.input_mean = np.zeros(d_in) if input_mean is None else np.array(input_mean, dtype=float).reshape(-1)
        self.input_scale = np.ones(d_in) if input_scale is None else np.array(input_scale, dtype=float).reshape(-1)
        if self.input_mean.shape != (d_in,) or self.input_scale.shape != (d_in,):
            raise ValidationError(f"input standardization must have {d_in} entries")
        if not np.all(np.isfinite(self.input_mean)) or not np.all(self.input_scale > 0):
            raise ValidationError("input standardization needs finite means and positive scales")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise NonFiniteError("parameters")

    @classmethod
    def init(
        cls,
        d_in: int,
        n_classes: int,
        hidden: Sequence[int] = (16,),
        d_z: int = 8,
        activation: Activation = "tanh",
        seed: int = 0,
        input_mean: ArrayLike | None = None,
        input_scale: ArrayLike | None = None,
    ) -> ModelParams:
        """
        Glorot-uniform weights and zero biases. Hidden layers use ``activation``; the last g
        layer (output size d_z) uses it too, so an identity activation gives an affine g.
        ``input_mean`` and ``input_scale`` default to the identity standardization.
        """
        rng = rng_stream(seed, "init")
        sizes = [d_in, *hidden, d_z]
        layers = [
            DenseLayer(_glorot(rng, n_in, n_out), np.zeros(n_out), activation)
            for n_in, n_out in zip(sizes, sizes[1:])
        ]
        return cls(layers, _glorot(rng, d_z, n_classes), np.zeros(n_classes), input_mean, input_scale)

    @property
    def d_in(self) -> int:
        return self.g_layers[0].d_in if self.g_layers else self.h_weight.shape[0]

    @property
    def d_z(self) -> int:
        return self.g_layers[-1].d_out if self.g_layers else self.h_weight.shape[0]

    @property
    def n_classes(self) -> int:
        return self.h_weight.shape[1]

    def arrays(self) -> list[Array]:
        out: list[Array] = []
        for layer in self.g_layers:
            out.extend([layer.weight, layer.bias])
        return [*out, self.h_weight, self.h_bias]

    def with_arrays(self, arrays: Sequence[Array]) -> ModelParams:
        """Same architecture with parameters replaced, in the order of ``arrays()``."""
        layers = [
            DenseLayer(arrays[2 * i], arrays[2 * i + 1], layer.activation) for i, layer in enumerate(self.g_layers)
        ]
        return ModelParams(layers, arrays[-2], arrays[-1], self.input_mean, self.input_scale)

    def flat(self) -> Array:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vector: ArrayLike) -> ModelParams:
        v = np.asarray(vector, dtype=float)
        expected = sum(a.size for a in self.arrays())
        if len(v) != expected:
            raise ValidationError(f"expected {expected} parameters, got {len(v)}")
        arrays, start = [], 0
        for a in self.arrays():
            arrays.append(v[start : start + a.size].reshape(a.shape))
            start += a.size
        return self.with_arrays(arrays)

    def zeros_like(self) -> ModelParams:
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def __add__(self, other: ModelParams) -> ModelParams:
        return self.with_arrays([a + b for a, b in zip(self.arrays(), other.arrays())])

    def scaled(self, factor: float) -> ModelParams:
        return self.with_arrays([factor * a for a in self.arrays()])

    def step(self, grads: ModelParams, learning_rate: float) -> ModelParams:
        """One plain gradient-descent update."""
        return self.with_arrays([a - learning_rate * g for a, g in zip(self.arrays(), grads.arrays())])

    def is_affine(self) -> bool:
        return all(layer.activation == "identity" for layer in self.g_layers)

    def affine_map(self) -> tuple[Array, Array]:
        """
        (M, c) with g(x) = M @ x + c, for models whose g layers are all identity-activated.
        """
        if not self.is_affine():
            raise ValidationError("g has non-linear activations and no affine form")
        M = np.diag(1.0 / self.input_scale)
        c = -M @ self.input_mean
        for layer in self.g_layers:
            M = layer.weight.T @ M
            c = layer.weight.T @ c + layer.bias
        return M, c

    def to_dict(self) -> dict[str, Any]:
        return {
            "g_layers": [
                {"weight": layer.weight.tolist(), "bias": layer.bias.tolist(), "activation": layer.activation}
                for layer in self.g_layers
            ],
            "h_weight": self.h_weight.tolist(),
            "h_bias": self.h_bias.tolist(),
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelParams:
        layers = [DenseLayer(d["weight"], d["bias"], d["activation"]) for d in data["g_layers"]]
        return cls(layers, data["h_weight"], data["h_bias"], data.get("input_mean"), data.get("input_scale"))


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by ``backward``."""

    inputs: list[Array] = field(default_factory=list)
    outputs: list[Array] = field(default_factory=list)
    pre_activations: list[Array] = field(default_factory=list)
    Z: Array | None = None
    logits: Array | None = None
    probs: Array | None = None


def forward(m: ModelParams, X: ArrayLike) -> tuple[Array, Array]:
    """
    Z = g(X) and the row-stochastic class probabilities softmax(Z @ h_weight + h_bias).

    Raises:
        ValidationError: X has the wrong number of columns
        NonFiniteError: a layer produced inf or nan
    """
    cache = forward_cached(m, X)
    assert cache.Z is not None
    assert cache.probs is not None
    return cache.Z, cache.probs


def forward_cached(m: ModelParams, X: ArrayLike) -> ForwardCache:
    h = np.array(X, dtype=float, ndmin=2)
    if h.shape[1] != m.d_in:
        raise ValidationError(f"model expects {m.d_in} input features, got {h.shape[1]}")
    h = (h - m.input_mean) / m.input_scale
    cache = ForwardCache()
    for i, layer in enumerate(m.g_layers):
        cache.inputs.append(h)
        pre = h @ layer.weight + layer.bias
        h = _activate(pre, layer.activation)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"g[{i}]")
        cache.pre_activations.append(pre)
        cache.outputs.append(h)
    cache.Z = h
    cache.logits = h @ m.h_weight + m.h_bias
    if not np.all(np.isfinite(cache.logits)):
        raise NonFiniteError("h")
    cache.probs = softmax(cache.logits, axis=1)
    return cache


def backward(m: ModelParams, cache: ForwardCache, grad_logits: Array | None, grad_Z: Array | None = None) -> ModelParams:
    """
    Parameter gradients given the loss gradients with respect to the logits and (for
    discrepancy terms) directly with respect to Z.
    """
    assert cache.Z is not None
    n_classes = m.n_classes
    if grad_logits is None:
        grad_logits = np.zeros((len(cache.Z), n_classes))
    grad_h_weight = cache.Z.T @ grad_logits
    grad_h_bias = grad_logits.sum(axis=0)
    upstream = grad_logits @ m.h_weight.T
    if grad_Z is not None:
        upstream = upstream + grad_Z

    layer_grads: list[DenseLayer] = []
    for layer, inputs, pre, out in reversed(list(zip(m.g_layers, cache.inputs, cache.pre_activations, cache.outputs))):
        delta = upstream * _activation_derivative(pre, out, layer.activation)
        layer_grads.append(DenseLayer(inputs.T @ delta, delta.sum(axis=0), layer.activation))
        upstream = delta @ layer.weight.T
    layer_grads.reverse()
    return ModelParams(layer_grads, grad_h_weight, grad_h_bias, m.input_mean, m.input_scale)


def input_standardization(*blocks: ArrayLike) -> tuple[Array, Array]:
    """Per-feature mean and standard deviation of the stacked blocks; constant features get scale 1."""
    X = np.vstack([np.array(b, dtype=float, ndmin=2) for b in blocks])
    scale = X.std(axis=0)
    return X.mean(axis=0), np.where(scale > 0, scale, 1.0)


def _activate(pre: Array, activation: Activation) -> Array:
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "leakyrelu":
        return np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    return pre


def _activation_derivative(pre: Array, out: Array, activation: Activation) -> Array:
    if activation == "tanh":
        return 1.0 - out**2
    if activation == "leakyrelu":
        return np.where(pre > 0, 1.0, LEAKY_SLOPE)
    return np.ones_like(pre)


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> Array:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))