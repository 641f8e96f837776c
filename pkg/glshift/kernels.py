"""
Kernels, Gram matrices and kernel two-sample discrepancies.

Each kernel is a small callable object producing Gram matrices, plus the backward pass of a
weighted sum of Gram entries so that discrepancies can be differentiated with respect to the
sample coordinates.
"""

from __future__ import annotations

import logging
from abc import abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist, pdist

from glshift.distributions import DiscreteDistribution
from glshift.errors import ClassAbsentError, ValidationError

if TYPE_CHECKING:
    from glshift.shiftgen import SampleSet

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

KernelKind = Literal["linear", "polynomial2", "laplacian", "gaussian"]
KERNEL_KINDS: tuple[KernelKind, ...] = ("linear", "polynomial2", "laplacian", "gaussian")
Estimator = Literal["biased", "unbiased"]
BANDWIDTH_SUBSAMPLE = 512

Array = NDArray[np.float64]


class Kernel:
    """
    Positive semi-definite kernel k(a, b) evaluated blockwise.

    Derived classes implement __call__ (the Gram matrix) and backward.
    """

    kind: KernelKind

    @abstractmethod
    def __call__(self, A: Array, B: Array) -> Array:
        """Gram matrix K[i, j] = k(A[i], B[j])."""

    @abstractmethod
    def backward(self, A: Array, B: Array, K: Array, G: Array | float) -> tuple[Array, Array]:
        """
        Gradients of sum(G * K) with respect to A and B.

        Args:
            A, B: the blocks K was computed from
            K: the Gram matrix self(A, B)
            G: weights of the Gram entries, same shape as K, or one weight for every entry
        """

    def spec(self) -> KernelSpec:
        return KernelSpec(self.kind, getattr(self, "bandwidth", None))


class LinearKernel(Kernel):
    kind = "linear"

    def __call__(self, A: Array, B: Array) -> Array:
        return A @ B.T

    def backward(self, A: Array, B: Array, K: Array, G: Array | float) -> tuple[Array, Array]:
        G = np.broadcast_to(G, K.shape)
        return G @ B, G.T @ A


class Polynomial2Kernel(Kernel):
    kind = "polynomial2"

    def __call__(self, A: Array, B: Array) -> Array:
        return (A @ B.T + 1.0) ** 2

    def backward(self, A: Array, B: Array, K: Array, G: Array | float) -> tuple[Array, Array]:
        G2 = G * 2.0 * (A @ B.T + 1.0)
        return G2 @ B, G2.T @ A


class GaussianKernel(Kernel):
    """exp(-||a - b||_2^2 / bandwidth)"""

    kind = "gaussian"

    def __init__(self, bandwidth: float) -> None:
        self.bandwidth = bandwidth

    def __call__(self, A: Array, B: Array) -> Array:
        return np.exp(-cdist(A, B, "sqeuclidean") / self.bandwidth)

    def backward(self, A: Array, B: Array, K: Array, G: Array | float) -> tuple[Array, Array]:
        G2 = G * (-K / self.bandwidth)
        grad_A = 2.0 * (G2.sum(axis=1)[:, None] * A - G2 @ B)
        grad_B = 2.0 * (G2.sum(axis=0)[:, None] * B - G2.T @ A)
        return grad_A, grad_B


class LaplacianKernel(Kernel):
    """exp(-||a - b||_1 / bandwidth); the gradient uses sign(0) = 0 at coinciding coordinates."""

    kind = "laplacian"

    def __init__(self, bandwidth: float) -> None:
        self.bandwidth = bandwidth

    def __call__(self, A: Array, B: Array) -> Array:
        return np.exp(-cdist(A, B, "cityblock") / self.bandwidth)

    def backward(self, A: Array, B: Array, K: Array, G: Array | float) -> tuple[Array, Array]:
        G2 = G * (-K / self.bandwidth)
        signs = np.sign(A[:, None, :] - B[None, :, :])
        grad_A = np.einsum("ij,ijd->id", G2, signs)
        grad_B = -np.einsum("ij,ijd->jd", G2, signs)
        return grad_A, grad_B


@dataclass(frozen=True)
class KernelSpec:
    """
    Kernel family plus bandwidth sigma (squared feature units for gaussian, feature units for
    laplacian, unused for linear and polynomial2).
    """

    kind: KernelKind = "gaussian"
    bandwidth: float | None = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValidationError(f"unknown kernel {self.kind!r}, expected one of {KERNEL_KINDS}")
        if self.needs_bandwidth and (self.bandwidth is None or not self.bandwidth > 0):
            raise ValidationError(f"{self.kind} kernel needs a positive bandwidth, got {self.bandwidth}")

    @property
    def needs_bandwidth(self) -> bool:
        return self.kind in ("laplacian", "gaussian")

    def build(self) -> Kernel:
        if self.kind == "linear":
            return LinearKernel()
        if self.kind == "polynomial2":
            return Polynomial2Kernel()
        assert self.bandwidth is not None
        if self.kind == "laplacian":
            return LaplacianKernel(self.bandwidth)
        return GaussianKernel(self.bandwidth)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "bandwidth": self.bandwidth}


@dataclass(frozen=True)
class GramMatrix:
    entries: Array
    kind: KernelKind

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]

    @property
    def T(self) -> GramMatrix:
        return GramMatrix(self.entries.T, self.kind)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T)).min())


def kernel_eval(spec: KernelSpec, z1: ArrayLike, z2: ArrayLike) -> float:
    a = np.atleast_1d(np.asarray(z1, dtype=float))
    b = np.atleast_1d(np.asarray(z2, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"kernel arguments must be vectors of equal length, got {a.shape} and {b.shape}")
    return float(spec.build()(a[None, :], b[None, :])[0, 0])


def gram(spec: KernelSpec, A: ArrayLike, B: ArrayLike) -> GramMatrix:
    a, b = _as_block(A), _as_block(B)
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("Gram matrices need non-empty sample blocks")
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"sample blocks disagree on dimension: {a.shape[1]} vs {b.shape[1]}")
    return GramMatrix(spec.build()(a, b), spec.kind)


def median_bandwidth(
    kind: KernelKind,
    Z: ArrayLike,
    rng: np.random.Generator | None = None,
    max_samples: int = BANDWIDTH_SUBSAMPLE,
) -> float | None:
    """
    Median heuristic: median pairwise squared distance (gaussian) or L1 distance (laplacian)
    over at most ``max_samples`` rows. Returns None for kernels without a bandwidth and 1.0
    when all sampled rows coincide.
    """
    if kind not in ("gaussian", "laplacian"):
        return None
    z = _as_block(Z)
    if len(z) > max_samples:
        if rng is None:
            rng = np.random.default_rng(0)
        z = z[np.sort(rng.choice(len(z), size=max_samples, replace=False))]
    if len(z) < 2:
        return 1.0
    distances = pdist(z, "sqeuclidean" if kind == "gaussian" else "cityblock")
    median = float(np.median(distances))
    return median if median > 0 else 1.0


def mmd2(spec: KernelSpec, S: ArrayLike, T: ArrayLike, estimator: Estimator = "biased") -> float:
    """
    Squared maximum mean discrepancy between two sample blocks.

    biased: mean(K_SS) + mean(K_TT) - 2 mean(K_ST), never negative.
    unbiased: within-block means exclude the diagonal; can be slightly negative.
    """
    return mmd2_with_grad(spec.build(), _as_block(S), _as_block(T), estimator, with_grad=False)[0]


def mmd2_with_grad(
    kernel: Kernel,
    S: Array,
    T: Array,
    estimator: Estimator = "biased",
    with_grad: bool = True,
) -> tuple[float, Array | None, Array | None]:
    """MMD^2 and, optionally, its gradients with respect to the rows of S and T."""
    n, m = len(S), len(T)
    minimum = 2 if estimator == "unbiased" else 1
    if n < minimum or m < minimum:
        raise ValidationError(f"{estimator} MMD needs at least {minimum} samples per block, got {n} and {m}")
    if S.shape[1] != T.shape[1]:
        raise ValidationError(f"sample blocks disagree on dimension: {S.shape[1]} vs {T.shape[1]}")

    K_ss, K_tt, K_st = kernel(S, S), kernel(T, T), kernel(S, T)
    G_ss, G_tt = _within_block_weights(n, estimator), _within_block_weights(m, estimator)
    G_st = -2.0 / (n * m)
    value = float(np.sum(G_ss * K_ss) + np.sum(G_tt * K_tt) + np.sum(G_st * K_st))
    if estimator == "biased":
        value = max(value, 0.0)
    if not with_grad:
        return value, None, None

    a, b = kernel.backward(S, S, K_ss, G_ss)
    grad_S = a + b
    a, b = kernel.backward(T, T, K_tt, G_tt)
    grad_T = a + b
    a, b = kernel.backward(S, T, K_st, G_st)
    return value, grad_S + a, grad_T + b


@dataclass
class ConditionalDiscrepancy:
    """Class-weighted sum of per-class MMD^2 and its gradients."""

    value: float
    grad_source: Array
    grad_target: Array
    dropped: tuple[int, ...]
    class_weights: NDArray[np.float64]


def class_conditional_discrepancy(
    kernel: Kernel,
    Zs: Array,
    ys: NDArray[np.int64],
    Zt: Array,
    yt: NDArray[np.int64],
    class_weights: DiscreteDistribution,
    estimator: Estimator = "biased",
    on_absent: Literal["raise", "drop"] = "raise",
    with_grad: bool = True,
) -> ConditionalDiscrepancy:
    """
    sum_y class_weights[y] * MMD^2(Zs | y, Zt | y).

    Labels outside [0, K) (for instance -1 for rejected pseudo-labels) belong to no class.

    Args:
        on_absent: "raise" fails with ClassAbsentError on the first weighted class lacking
            samples; "drop" removes such classes and renormalizes the remaining weights.
    """
    minimum = 2 if estimator == "unbiased" else 1
    weights = class_weights.probs.copy()
    grad_s = np.zeros_like(Zs)
    grad_t = np.zeros_like(Zt)
    rows_s = [np.flatnonzero(ys == y) for y in range(len(weights))]
    rows_t = [np.flatnonzero(yt == y) for y in range(len(weights))]

    dropped = []
    for y, w in enumerate(weights):
        if w <= 0:
            continue
        for side, rows in (("source", rows_s[y]), ("target", rows_t[y])):
            if len(rows) < minimum:
                if on_absent == "raise":
                    raise ClassAbsentError(y, side)
                dropped.append(y)
                break
    if dropped:
        weights[dropped] = 0.0
        total = weights.sum()
        if total <= 0:
            return ConditionalDiscrepancy(0.0, grad_s, grad_t, tuple(dropped), weights)
        weights /= total

    value = 0.0
    for y, w in enumerate(weights):
        if w <= 0:
            continue
        v, gs, gt = mmd2_with_grad(kernel, Zs[rows_s[y]], Zt[rows_t[y]], estimator, with_grad)
        value += w * v
        if with_grad:
            assert gs is not None
            assert gt is not None
            grad_s[rows_s[y]] += w * gs
            grad_t[rows_t[y]] += w * gt
    return ConditionalDiscrepancy(value, grad_s, grad_t, tuple(dropped), weights)


def conditional_discrepancy(
    spec: KernelSpec,
    S: SampleSet,
    T: SampleSet,
    class_weights: DiscreteDistribution | None = None,
    estimator: Estimator = "biased",
) -> float:
    """
    Class-wise conditional discrepancy between two labelled sample sets.

    Args:
        class_weights: defaults to the empirical label distribution of S, i.e. the source
            P_Y weighting. Pass ``ImportanceWeights.reweighted_labels()`` for the P^w_Y
            weighting used by the gls objective.

    Raises:
        ClassAbsentError: a class with positive weight is missing on either side
    """
    n_classes = max(S.n_classes, T.n_classes)
    if class_weights is None:
        class_weights = DiscreteDistribution.from_labels(S.labels, n_classes)
    if len(class_weights) != n_classes:
        raise ValidationError(f"{len(class_weights)} class weights for {n_classes} classes")
    result = class_conditional_discrepancy(
        spec.build(), S.features, S.labels, T.features, T.labels, class_weights, estimator, with_grad=False
    )
    return result.value


def _within_block_weights(n: int, estimator: Estimator) -> Array | float:
    if estimator == "biased":
        return 1.0 / (n * n)
    weights = np.full((n, n), 1.0 / (n * (n - 1)))
    np.fill_diagonal(weights, 0.0)
    return weights


def _as_block(A: ArrayLike) -> Array:
    a = np.asarray(A, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a
