"""
Training objectives of the four shift-correction frameworks.

Every objective is the (possibly weighted) source cross-entropy plus lambda_g times a kernel
discrepancy between source and target representations:

    covariate         risk with w = 1, marginal MMD^2 of Z
    label_only        risk with w, no discrepancy
    conditional_only  risk with w = 1, class-conditional discrepancy weighted by P_Y
    gls               risk with w, class-conditional discrepancy weighted by P^w_Y

The target batch enters through g only; its pseudo-labels select the class blocks.
"""

from __future__ import annotations

import logging
from abc import abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from glshift.distributions import DiscreteDistribution
from glshift.errors import ValidationError
from glshift.kernels import Estimator, Kernel, class_conditional_discrepancy, mmd2_with_grad
from glshift.model import ModelParams, backward, forward_cached

if TYPE_CHECKING:
    from glshift.shiftgen import SampleSet
    from glshift.training import TrainConfig
    from glshift.weights import ImportanceWeights

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

Framework = Literal["covariate", "label_only", "conditional_only", "gls"]
FRAMEWORKS: tuple[Framework, ...] = ("covariate", "label_only", "conditional_only", "gls")
ClassWeightSource = Literal["source", "target"]
PROB_FLOOR = 1e-12

Array = NDArray[np.float64]


def weighted_risk(probs: ArrayLike, labels: ArrayLike, w: ImportanceWeights | ArrayLike) -> float:
    """
    (1/n) sum_i w[y_i] * (-ln probs[i, y_i]), probabilities floored at 1e-12.

    With w = 1 this is the plain cross-entropy.
    """
    return weighted_risk_with_grad(np.asarray(probs, dtype=float), np.asarray(labels), _class_weights(w))[0]


def weighted_risk_with_grad(probs: Array, labels: NDArray[np.int64], class_w: Array) -> tuple[float, Array]:
    """Weighted cross-entropy and its gradient with respect to the logits behind ``probs``."""
    n = len(labels)
    if probs.shape[0] != n:
        raise ValidationError(f"{probs.shape[0]} probability rows for {n} labels")
    if len(class_w) != probs.shape[1]:
        raise ValidationError(f"{len(class_w)} class weights for {probs.shape[1]} classes")
    rows = np.arange(n)
    p_true = probs[rows, labels]
    sample_w = class_w[labels]
    value = float(np.sum(sample_w * -np.log(np.maximum(p_true, PROB_FLOOR))) / n)

    grad = probs.copy()
    grad[rows, labels] -= 1.0
    # the floored branch is constant
    grad *= (sample_w * (p_true > PROB_FLOOR) / n)[:, None]
    return value, grad


def pseudo_label(probs_t: ArrayLike, threshold: float | None = None) -> NDArray[np.int64]:
    """
    Row-wise argmax; ties go to the smaller class index.

    Args:
        threshold: optional confidence level; rows whose top probability is below it get -1
    """
    probs = np.asarray(probs_t, dtype=float)
    labels = np.argmax(probs, axis=1).astype(np.int64)
    if threshold is not None:
        labels[probs.max(axis=1) < threshold] = -1
    return labels


@dataclass
class ObjectiveValue:
    loss: float
    risk: float
    discrepancy: float
    grads: ModelParams
    dropped_classes: tuple[int, ...] = ()


class Objective:
    """
    Base class of the framework objectives.

    Derived classes define which class weights the risk uses and how the discrepancy
    between the two representation batches is measured.
    """

    framework: Framework

    def __init__(
        self,
        kernel: Kernel,
        lambda_g: float,
        estimator: Estimator = "biased",
        class_weight_source: ClassWeightSource = "source",
    ) -> None:
        if lambda_g < 0:
            raise ValidationError(f"lambda_g must be non-negative, got {lambda_g}")
        self.kernel = kernel
        self.lambda_g = lambda_g
        self.estimator = estimator
        self.class_weight_source = class_weight_source

    @abstractmethod
    def risk_weights(self, w: ImportanceWeights) -> Array:
        """Per-class weights of the source cross-entropy."""

    def discrepancy(
        self,
        Zs: Array,
        ys: NDArray[np.int64],
        Zt: Array,
        yt: NDArray[np.int64],
        w: ImportanceWeights,
    ) -> tuple[float, Array, Array, tuple[int, ...]]:
        """
        Discrepancy value, its gradients with respect to Zs and Zt, and the dropped classes.
        Objectives without an alignment term return zeros.
        """
        return 0.0, np.zeros_like(Zs), np.zeros_like(Zt), ()

    def __call__(
        self,
        m: ModelParams,
        Xs: Array,
        ys: NDArray[np.int64],
        Xt: Array,
        yt: NDArray[np.int64] | None,
        w: ImportanceWeights,
    ) -> ObjectiveValue:
        """
        Loss and exact gradients on one pair of batches.

        Args:
            m: current parameters
            Xs, ys: source features and labels
            Xt, yt: target features and pseudo-labels (-1 excludes a sample from the class blocks);
                yt may be None only for objectives without class blocks
            w: current importance weights
        """
        source = forward_cached(m, Xs)
        assert source.probs is not None
        assert source.Z is not None
        risk, grad_logits = weighted_risk_with_grad(source.probs, ys, self.risk_weights(w))

        if self.lambda_g == 0 or not self.uses_discrepancy:
            return ObjectiveValue(risk, risk, 0.0, backward(m, source, grad_logits))

        if yt is None:
            if self.needs_target_labels:
                raise ValidationError(f"the {self.framework} objective needs target pseudo-labels")
            yt = np.full(len(Xt), -1, dtype=np.int64)
        target = forward_cached(m, Xt)
        assert target.Z is not None
        value, grad_zs, grad_zt, dropped = self.discrepancy(source.Z, ys, target.Z, yt, w)
        grads = backward(m, source, grad_logits, self.lambda_g * grad_zs) + backward(
            m, target, None, self.lambda_g * grad_zt
        )
        return ObjectiveValue(risk + self.lambda_g * value, risk, value, grads, dropped)

    @property
    def uses_discrepancy(self) -> bool:
        return type(self).discrepancy is not Objective.discrepancy

    @property
    def needs_target_labels(self) -> bool:
        return False


class CovariateShiftObjective(Objective):
    """Source risk plus the marginal MMD^2 between source and target representations."""

    framework = "covariate"

    def risk_weights(self, w: ImportanceWeights) -> Array:
        return np.ones(w.n_classes)

    def discrepancy(
        self,
        Zs: Array,
        ys: NDArray[np.int64],
        Zt: Array,
        yt: NDArray[np.int64],
        w: ImportanceWeights,
    ) -> tuple[float, Array, Array, tuple[int, ...]]:
        value, grad_s, grad_t = mmd2_with_grad(self.kernel, Zs, Zt, self.estimator)
        assert grad_s is not None
        assert grad_t is not None
        return value, grad_s, grad_t, ()


class LabelShiftObjective(Objective):
    """Importance-weighted source risk only."""

    framework = "label_only"

    def risk_weights(self, w: ImportanceWeights) -> Array:
        return np.asarray(w.w)


class ConditionalShiftObjective(Objective):
    framework = "conditional_only"

    @property
    def needs_target_labels(self) -> bool:
        return True

    def risk_weights(self, w: ImportanceWeights) -> Array:
        return np.ones(w.n_classes)

    def class_weights(self, w: ImportanceWeights, yt: NDArray[np.int64]) -> DiscreteDistribution:
        if self.class_weight_source == "target":
            return _pseudo_label_marginal(yt, w.n_classes, w.reference_p_y)
        return w.reference_p_y

    def discrepancy(
        self,
        Zs: Array,
        ys: NDArray[np.int64],
        Zt: Array,
        yt: NDArray[np.int64],
        w: ImportanceWeights,
    ) -> tuple[float, Array, Array, tuple[int, ...]]:
        result = class_conditional_discrepancy(
            self.kernel, Zs, ys, Zt, yt, self.class_weights(w, yt), self.estimator, on_absent="drop"
        )
        return result.value, result.grad_source, result.grad_target, result.dropped


class GLSObjective(ConditionalShiftObjective):
    """Importance-weighted risk plus the conditional discrepancy weighted by P^w_Y."""

    framework = "gls"

    def risk_weights(self, w: ImportanceWeights) -> Array:
        return np.asarray(w.w)

    def class_weights(self, w: ImportanceWeights, yt: NDArray[np.int64]) -> DiscreteDistribution:
        if self.class_weight_source == "target":
            return _pseudo_label_marginal(yt, w.n_classes, w.reweighted_labels())
        return w.reweighted_labels()


OBJECTIVES: dict[Framework, type[Objective]] = {
    "covariate": CovariateShiftObjective,
    "label_only": LabelShiftObjective,
    "conditional_only": ConditionalShiftObjective,
    "gls": GLSObjective,
}


def make_objective(
    framework: Framework,
    kernel: Kernel,
    lambda_g: float,
    estimator: Estimator = "biased",
    class_weight_source: ClassWeightSource = "source",
) -> Objective:
    if framework not in OBJECTIVES:
        raise ValidationError(f"unknown framework {framework!r}, expected one of {FRAMEWORKS}")
    return OBJECTIVES[framework](kernel, lambda_g, estimator, class_weight_source)


def objective(
    framework: Framework,
    m: ModelParams,
    source: SampleSet,
    target: SampleSet,
    w: ImportanceWeights,
    cfg: TrainConfig,
) -> ObjectiveValue:
    """
    Evaluate one framework objective on a labelled source batch and a pseudo-labelled target batch.

    The kernel must carry a bandwidth when it needs one (``cfg.bandwidth``).
    """
    kernel = cfg.kernel_spec().build()
    fn = make_objective(framework, kernel, cfg.lambda_g, cfg.estimator, cfg.class_weights)
    return fn(m, source.features, source.labels, target.features, target.pseudo_labels, w)


def _class_weights(w: ImportanceWeights | ArrayLike) -> Array:
    return np.asarray(getattr(w, "w", w), dtype=float)


def _pseudo_label_marginal(yt: NDArray[np.int64], n_classes: int, fallback: DiscreteDistribution) -> DiscreteDistribution:
    kept = yt[yt >= 0]
    if len(kept) == 0:
        return fallback
    return DiscreteDistribution.from_labels(kept, n_classes)
