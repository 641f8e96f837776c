"""
Synthetic source/target domain pairs with controllable conditional shift and label shift.

Class conditionals are Gaussian mixtures (one component by default), so every downstream
quantity has an exact oracle. Randomness comes from the named streams of
``glshift.utils.helpers.rng_stream``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from glshift.distributions import DiscreteDistribution, MixtureDensity, combine_mixtures
from glshift.errors import ValidationError
from glshift.utils.helpers import rng_stream

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

Domain = Literal["source", "target"]
DOMAINS: tuple[Domain, ...] = ("source", "target")
LATTICE_SPACING = 3.0


class DomainSpec:
    """
    Exact generative description of one domain: a class conditional per label plus the
    label distribution.
    """

    def __init__(self, class_conditionals: Sequence[MixtureDensity], label_dist: DiscreteDistribution) -> None:
        if len(class_conditionals) != len(label_dist):
            raise ValidationError(
                f"{len(class_conditionals)} class conditionals for {len(label_dist)} label probabilities"
            )
        dims = {c.dim for c in class_conditionals}
        if len(dims) != 1:
            raise ValidationError(f"class conditionals disagree on dimension: {sorted(dims)}")
        self.class_conditionals = tuple(class_conditionals)
        self.label_dist = label_dist

    @property
    def n_classes(self) -> int:
        return len(self.label_dist)

    @property
    def dim(self) -> int:
        return self.class_conditionals[0].dim

    def marginal(self) -> MixtureDensity:
        """Feature density sum_y p(y) f(x | y)."""
        return combine_mixtures(self.class_conditionals, self.label_dist)

    def with_label_dist(self, label_dist: DiscreteDistribution) -> DomainSpec:
        return DomainSpec(self.class_conditionals, label_dist)

    def reweighted(self, w: ArrayLike) -> DomainSpec:
        """The w-weighted domain: conditionals unchanged, labels distributed as w * p_Y."""
        weights = np.asarray(getattr(w, "w", w), dtype=float)
        if weights.shape != (self.n_classes,) or np.any(weights < 0):
            raise ValidationError(f"need {self.n_classes} non-negative class weights")
        return self.with_label_dist(DiscreteDistribution.from_counts(weights * self.label_dist.probs))

    def pushforward(self, matrix: ArrayLike, offset: ArrayLike) -> DomainSpec:
        """Domain of (g(X), Y) for the affine map g(x) = matrix @ x + offset."""
        return DomainSpec([c.affine_pushforward(matrix, offset) for c in self.class_conditionals], self.label_dist)

    def sample(self, n: int, seed: int, domain: Domain = "source") -> SampleSet:
        return sample(self, n, seed, domain)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label_dist": self.label_dist.to_list(),
            "class_conditionals": [c.to_dict() for c in self.class_conditionals],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DomainSpec:
        return cls(
            [MixtureDensity.from_dict(c) for c in data["class_conditionals"]],
            DiscreteDistribution(data["label_dist"]),
        )


class ShiftScenario:
    """
    A source/target pair. ``delta`` is the per-class mean translation; it is zero exactly
    when the two domains share their class conditionals.
    """

    def __init__(self, source: DomainSpec, target: DomainSpec, delta: float, seed: int) -> None:
        if source.n_classes != target.n_classes:
            raise ValidationError(f"source has {source.n_classes} classes, target {target.n_classes}")
        if source.dim != target.dim:
            raise ValidationError(f"source has dimension {source.dim}, target {target.dim}")
        if delta < 0:
            raise ValidationError(f"shift magnitude must be non-negative, got {delta}")
        identical = all(a.same_as(b) for a, b in zip(source.class_conditionals, target.class_conditionals))
        if (delta == 0) != identical:
            raise ValidationError("shift magnitude 0 must coincide with identical class conditionals")
        self.source = source
        self.target = target
        self.delta = float(delta)
        self.seed = int(seed)

    @property
    def n_classes(self) -> int:
        return self.source.n_classes

    @property
    def dim(self) -> int:
        return self.source.dim

    def sample(self, n_source: int, n_target: int, seed: int | None = None) -> tuple[SampleSet, SampleSet]:
        seed = self.seed if seed is None else seed
        return self.source.sample(n_source, seed, "source"), self.target.sample(n_target, seed, "target")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_classes": self.n_classes,
            "dim": self.dim,
            "delta": self.delta,
            "seed": self.seed,
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ShiftScenario:
        return cls(DomainSpec.from_dict(data["source"]), DomainSpec.from_dict(data["target"]), data["delta"], data["seed"])


class SampleSet:
    """
    Feature matrix with integer labels and a domain tag.

    ``pseudo_labels`` holds predicted labels; -1 marks a sample rejected by a confidence threshold.
    """

    def __init__(
        self,
        features: ArrayLike,
        labels: ArrayLike,
        domain: Domain,
        n_classes: int | None = None,
        pseudo_labels: ArrayLike | None = None,
    ) -> None:
        X = np.array(features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or len(X) != len(y):
            raise ValidationError(f"{len(y)} labels for a feature matrix of shape {X.shape}")
        if domain not in DOMAINS:
            raise ValidationError(f"domain must be one of {DOMAINS}, got {domain!r}")
        if n_classes is None:
            n_classes = int(y.max()) + 1 if len(y) else 1
        if np.any(y < 0) or np.any(y >= n_classes):
            raise ValidationError(f"labels must lie in [0, {n_classes})")
        pseudo = None
        if pseudo_labels is not None:
            pseudo = np.array(pseudo_labels, dtype=np.int64).reshape(-1)
            if len(pseudo) != len(y):
                raise ValidationError(f"{len(pseudo)} pseudo-labels for {len(y)} samples")
            if np.any(pseudo < -1) or np.any(pseudo >= n_classes):
                raise ValidationError(f"pseudo-labels must lie in [-1, {n_classes})")
        self.features = X
        self.labels = y
        self.domain = domain
        self.n_classes = n_classes
        self.pseudo_labels = pseudo

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def label_distribution(self) -> DiscreteDistribution:
        return DiscreteDistribution.from_labels(self.labels, self.n_classes)

    def class_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.n_classes)

    def with_pseudo_labels(self, pseudo_labels: ArrayLike | None) -> SampleSet:
        return SampleSet(self.features, self.labels, self.domain, self.n_classes, pseudo_labels)

    def select(self, rows: ArrayLike) -> SampleSet:
        index = np.asarray(rows, dtype=np.int64)
        pseudo = None if self.pseudo_labels is None else self.pseudo_labels[index]
        return SampleSet(self.features[index], self.labels[index], self.domain, self.n_classes, pseudo)


def make_scenario(
    n_classes: int,
    dim: int,
    delta: float,
    p_y: DiscreteDistribution | ArrayLike,
    q_y: DiscreteDistribution | ArrayLike,
    seed: int,
    scale: float = 1.0,
    directions: ArrayLike | None = None,
) -> ShiftScenario:
    """
    Gaussian scenario with one isotropic component per class.

    Source means lie on the lattice 3 * e_(y mod dim) * (1 + y // dim), so any two classes are
    at least 3 feature units apart. Target means move by ``delta`` along seeded unit directions
    (or the given ``directions``, normalized row by row). Covariances are scale^2 * I.

    Args:
        n_classes: K >= 2
        dim: feature dimension >= 1
        delta: conditional shift magnitude
        p_y, q_y: source and target label distributions on K classes
        seed: scenario seed; also drives the default directions
        scale: isotropic standard deviation of every class
        directions: optional (K, dim) array of shift directions
    """
    if n_classes < 2:
        raise ValidationError(f"a scenario needs at least 2 classes, got {n_classes}")
    if dim < 1:
        raise ValidationError(f"dimension must be positive, got {dim}")
    if scale <= 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    p = p_y if isinstance(p_y, DiscreteDistribution) else DiscreteDistribution(p_y)
    q = q_y if isinstance(q_y, DiscreteDistribution) else DiscreteDistribution(q_y)
    if len(p) != n_classes or len(q) != n_classes:
        raise ValidationError(f"label distributions must have {n_classes} entries")

    means = np.zeros((n_classes, dim))
    for y in range(n_classes):
        means[y, y % dim] = LATTICE_SPACING * (1 + y // dim)

    if directions is None:
        u = rng_stream(seed, "directions").standard_normal((n_classes, dim))
    else:
        u = np.array(directions, dtype=float).reshape(n_classes, dim)
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("shift directions must be non-zero")
    u = u / norms

    covariance = scale**2 * np.eye(dim)
    source = DomainSpec([MixtureDensity.gaussian(mu, covariance) for mu in means], p)
    target_means = means + delta * u if delta > 0 else means
    target = DomainSpec([MixtureDensity.gaussian(mu, covariance) for mu in target_means], q)
    return ShiftScenario(source, target, delta, seed)


def sample(spec: DomainSpec, n: int, seed: int, domain: Domain = "source") -> SampleSet:
    """
    Draw n labelled samples: labels i.i.d. from the label distribution, then the features of
    each class in ascending label order from its conditional.
    """
    if n < 1:
        raise ValidationError(f"sample size must be positive, got {n}")
    domain_key = DOMAINS.index(domain)
    labels = rng_stream(seed, "labels", domain_key).choice(spec.n_classes, size=n, p=spec.label_dist.probs)
    feature_rng = rng_stream(seed, "features", domain_key)
    features = np.empty((n, spec.dim))
    for y, conditional in enumerate(spec.class_conditionals):
        rows = np.flatnonzero(labels == y)
        features[rows] = conditional.sample(len(rows), feature_rng)
    return SampleSet(features, labels, domain, spec.n_classes)


def subsample_protocol(s: SampleSet, k1: int, rate: float, seed: int) -> SampleSet:
    """
    Keep ceil(rate * n_y) uniformly chosen samples of every class y < k1 and all samples of
    the other classes. Selected rows keep their original order.

    Raises:
        ValidationError: k1 outside [0, K], rate outside (0, 1], or a subsampled class without samples
    """
    if not 0 <= k1 <= s.n_classes:
        raise ValidationError(f"k1 must lie in [0, {s.n_classes}], got {k1}")
    if not 0.0 < rate <= 1.0:
        raise ValidationError(f"rate must lie in (0, 1], got {rate}")
    rng = rng_stream(seed, "subsample")
    keep = np.ones(len(s), dtype=bool)
    for y in range(k1):
        rows = np.flatnonzero(s.labels == y)
        n_keep = math.ceil(round(rate * len(rows), 9))
        if n_keep == 0:
            raise ValidationError(f"subsampling leaves class {y} without samples")
        dropped = np.setdiff1d(rows, rng.choice(rows, size=n_keep, replace=False))
        keep[dropped] = False
    logger.debug(f"Subsampling kept {keep.sum()} of {len(s)} rows")
    return s.select(np.flatnonzero(keep))
