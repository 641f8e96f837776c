"""
Exact ground truth on scenario specs: Bayes classifiers and errors, true risks of models,
posterior disagreement and the domain/representation mutual-information terms.

Integrals run on a QuadratureGrid (dimension at most 3); risks of arbitrary models are Monte
Carlo estimates with standard errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Protocol, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp, rel_entr, softmax

from glshift.distributions import DiscreteDistribution, QuadratureEstimate, QuadratureGrid, check_mass
from glshift.divergences import generalized_js, js_continuous
from glshift.errors import ValidationError
from glshift.model import ModelParams, forward
from glshift.shiftgen import DomainSpec, ShiftScenario
from glshift.utils.helpers import rng_stream
from glshift.weights import ImportanceWeights

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

Loss = Literal["zero_one", "cross_entropy"]
PROB_FLOOR = 1e-12
DEFAULT_MC_SAMPLES = 200_000


class Classifier(Protocol):
    def predict(self, X: NDArray[np.float64]) -> NDArray[np.int64]: ...


class BayesClassifier:
    """argmax_k p(k) f_k(x); ties go to the smaller class index."""

    def __init__(self, spec: DomainSpec) -> None:
        self.spec = spec

    def log_joint(self, X: ArrayLike) -> NDArray[np.float64]:
        """(n, K) matrix of log p(k) + log f_k(x)."""
        points = np.array(X, dtype=float, ndmin=2)
        if points.shape[1] != self.spec.dim:
            points = points.reshape(-1, self.spec.dim)
        return _log_joint(self.spec, points)

    def predict(self, X: ArrayLike) -> NDArray[np.int64]:
        return np.argmax(self.log_joint(X), axis=1).astype(np.int64)

    def predict_proba(self, X: ArrayLike) -> NDArray[np.float64]:
        return softmax(self.log_joint(X), axis=1)


class ModelClassifier:
    """Adapter giving ModelParams the classifier interface."""

    def __init__(self, params: ModelParams) -> None:
        self.params = params

    def predict_proba(self, X: ArrayLike) -> NDArray[np.float64]:
        return forward(self.params, X)[1]

    def predict(self, X: ArrayLike) -> NDArray[np.int64]:
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)


Predictor = Union[ModelParams, BayesClassifier, ModelClassifier, Classifier]


@dataclass(frozen=True)
class MonteCarloConfig:
    n_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    stderr: float
    n_samples: int


@dataclass(frozen=True)
class MarginalMutualInfo:
    """d_JS,a between the label distributions and between the representation marginals."""

    label_term: float
    feature_term: QuadratureEstimate

    @property
    def slack(self) -> float:
        return self.label_term - self.feature_term.value


def bayes_classifier(spec: DomainSpec) -> BayesClassifier:
    return BayesClassifier(spec)


def bayes_error(spec: DomainSpec, grid: QuadratureGrid | None = None) -> QuadratureEstimate:
    """
    Misclassification mass of the Bayes classifier, int (sum_k p_k f_k - max_k p_k f_k).

    Raises:
        QuadratureError: dimension above 3
    """
    if grid is None:
        grid = QuadratureGrid.for_mixtures(*spec.class_conditionals)

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        joint = np.exp(_log_joint(spec, z))
        total = joint.sum(axis=1)
        return np.column_stack([total - joint.max(axis=1), total])

    fine, error = grid.estimate(integrand)
    check_mass(fine[1:])
    return QuadratureEstimate(max(float(fine[0]), 0.0), float(error[0]))


def classifier_risk(spec: DomainSpec, predictor: Predictor, grid: QuadratureGrid | None = None) -> QuadratureEstimate:
    """Zero-one risk of a classifier by quadrature; accurate only up to the grid spacing at decision boundaries."""
    classifier = _as_classifier(predictor)
    if grid is None:
        grid = QuadratureGrid.for_mixtures(*spec.class_conditionals)

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        joint = np.exp(_log_joint(spec, z))
        correct = joint[np.arange(len(z)), classifier.predict(z)]
        return joint.sum(axis=1) - correct

    fine, error = grid.estimate(integrand)
    return QuadratureEstimate(float(fine), float(error))


def true_risk(
    spec: DomainSpec,
    predictor: Predictor,
    loss: Loss = "zero_one",
    mc: MonteCarloConfig | None = None,
    stream: int = 0,
) -> RiskEstimate:
    """
    Monte Carlo estimate of E[loss(h(X), Y)] under ``spec``.

    Args:
        spec: domain to draw (X, Y) from
        predictor: ModelParams or any object with ``predict`` (and ``predict_proba`` for cross-entropy)
        loss: zero_one or cross_entropy
        mc: sample size and seed
        stream: extra key separating independent estimates that share a seed
    """
    mc = mc or MonteCarloConfig()
    classifier = _as_classifier(predictor)
    data = spec.sample(mc.n_samples, int(rng_stream(mc.seed, "monte_carlo", stream).integers(2**63)))
    if data.dim != _input_dim(predictor, data.dim):
        raise ValidationError(f"predictor expects {_input_dim(predictor, data.dim)} features, spec has {data.dim}")
    if loss == "zero_one":
        losses = (classifier.predict(data.features) != data.labels).astype(float)
    elif loss == "cross_entropy":
        if not hasattr(classifier, "predict_proba"):
            raise ValidationError("cross-entropy risk needs class probabilities")
        probs = classifier.predict_proba(data.features)  # type: ignore[attr-defined]
        losses = -np.log(np.maximum(probs[np.arange(len(data)), data.labels], PROB_FLOOR))
    else:
        raise ValidationError(f"unknown loss {loss!r}")
    stderr = float(losses.std(ddof=1) / math.sqrt(len(losses))) if len(losses) > 1 else math.inf
    return RiskEstimate(float(losses.mean()), stderr, len(losses))


def domain_specs(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike | None,
    transform: ModelParams | tuple[ArrayLike, ArrayLike] | None = None,
) -> tuple[DomainSpec, DomainSpec]:
    """
    (P^w, Q) as specs of (Z, Y): the w-weighted source and the target, pushed through an affine g.

    Args:
        w: class weights of the source; None keeps the source labels unchanged
        transform: None for the identity, an affine ModelParams, or a pair (M, c) for z = M x + c
    """
    source = scenario.source if w is None else scenario.source.reweighted(w)
    target = scenario.target
    if transform is None:
        return source, target
    M, c = transform.affine_map() if isinstance(transform, ModelParams) else transform
    M = np.atleast_2d(np.asarray(M, dtype=float))
    c = np.asarray(c, dtype=float).reshape(M.shape[0])
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise ValidationError("the affine map must have full row rank to push densities forward")
    return source.pushforward(M, c), target.pushforward(M, c)


def posterior_disagreement(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike | None,
    transform: ModelParams | tuple[ArrayLike, ArrayLike] | None = None,
    grid: QuadratureGrid | None = None,
) -> QuadratureEstimate:
    """
    int gamma(z) d_JS(P^w_{Y|z}, Q_{Y|z}) dz with gamma = max(p^w_Z, q_Z).

    Posteriors are formed in log space, so they stay defined where both densities underflow.
    """
    p_spec, q_spec = domain_specs(scenario, w, transform)
    if grid is None:
        grid = QuadratureGrid.for_mixtures(*p_spec.class_conditionals, *q_spec.class_conditionals)

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        log_p, log_q = _log_joint(p_spec, z), _log_joint(q_spec, z)
        log_pz, log_qz = logsumexp(log_p, axis=1), logsumexp(log_q, axis=1)
        post_p = np.exp(log_p - log_pz[:, None])
        post_q = np.exp(log_q - log_qz[:, None])
        mid = 0.5 * (post_p + post_q)
        js = 0.5 * rel_entr(post_p, mid).sum(axis=1) + 0.5 * rel_entr(post_q, mid).sum(axis=1)
        pz, qz = np.exp(log_pz), np.exp(log_qz)
        return np.column_stack([np.maximum(pz, qz) * js, pz, qz])

    fine, error = grid.estimate(integrand)
    check_mass(fine[1:])
    return QuadratureEstimate(max(float(fine[0]), 0.0), float(error[0]))


def mixture_label_dist(
    scenario: ShiftScenario, w: ImportanceWeights | ArrayLike | None, a: float
) -> DiscreteDistribution:
    """R^w_Y = (1 - a) P^w_Y + a Q_Y."""
    p_spec, q_spec = domain_specs(scenario, w)
    return DiscreteDistribution.from_counts((1 - a) * p_spec.label_dist.probs + a * q_spec.label_dist.probs)


def conditional_mutual_info(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike | None,
    a: float = 0.5,
    transform: ModelParams | tuple[ArrayLike, ArrayLike] | None = None,
    grid: QuadratureGrid | None = None,
) -> QuadratureEstimate:
    """E_{R^w_Y}[d_JS,a(P^w_{Z|Y}, Q_{Z|Y})], zero exactly when the class conditionals agree."""
    _check_domain_mass(a)
    p_spec, q_spec = domain_specs(scenario, w, transform)
    r = mixture_label_dist(scenario, w, a)
    if grid is None:
        grid = QuadratureGrid.for_mixtures(*p_spec.class_conditionals, *q_spec.class_conditionals)
    value, error = 0.0, 0.0
    for r_y, f_p, f_q in zip(r.probs, p_spec.class_conditionals, q_spec.class_conditionals):
        if r_y == 0 or f_p.same_as(f_q):
            continue
        js = js_continuous(f_p, f_q, a, grid)
        value += r_y * js.value
        error += r_y * js.error
    return QuadratureEstimate(value, error)


def marginal_mutual_info(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike | None,
    a: float = 0.5,
    transform: ModelParams | tuple[ArrayLike, ArrayLike] | None = None,
    grid: QuadratureGrid | None = None,
) -> MarginalMutualInfo:
    """d_JS,a(P^w_Y, Q_Y) and d_JS,a(P^w_Z, Q_Z)."""
    _check_domain_mass(a)
    p_spec, q_spec = domain_specs(scenario, w, transform)
    label_term = generalized_js(p_spec.label_dist, q_spec.label_dist, a)
    p_z, q_z = p_spec.marginal(), q_spec.marginal()
    if grid is None:
        grid = QuadratureGrid.for_mixtures(p_z, q_z)
    return MarginalMutualInfo(label_term, js_continuous(p_z, q_z, a, grid))


def joint_tv(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike | None,
    transform: ModelParams | tuple[ArrayLike, ArrayLike] | None = None,
    grid: QuadratureGrid | None = None,
) -> QuadratureEstimate:
    """TV(P^w_{ZY}, Q_{ZY}) = (1/2) sum_y int |p^w(y) f_y - q(y) g_y|."""
    p_spec, q_spec = domain_specs(scenario, w, transform)
    if grid is None:
        grid = QuadratureGrid.for_mixtures(*p_spec.class_conditionals, *q_spec.class_conditionals)

    def integrand(z: NDArray[np.float64]) -> NDArray[np.float64]:
        jp, jq = np.exp(_log_joint(p_spec, z)), np.exp(_log_joint(q_spec, z))
        return np.column_stack([0.5 * np.abs(jp - jq).sum(axis=1), jp.sum(axis=1), jq.sum(axis=1)])

    fine, error = grid.estimate(integrand)
    check_mass(fine[1:])
    return QuadratureEstimate(float(fine[0]), float(error[0]))


def _log_joint(spec: DomainSpec, points: NDArray[np.float64]) -> NDArray[np.float64]:
    with np.errstate(divide="ignore"):
        log_prior = np.log(spec.label_dist.probs)
    return np.column_stack([c.logpdf(points) for c in spec.class_conditionals]) + log_prior


def _as_classifier(predictor: Predictor) -> Classifier:
    if isinstance(predictor, ModelParams):
        return ModelClassifier(predictor)
    return predictor


def _input_dim(predictor: Predictor, default: int) -> int:
    if isinstance(predictor, ModelParams):
        return predictor.d_in
    if isinstance(predictor, ModelClassifier):
        return predictor.params.d_in
    if isinstance(predictor, BayesClassifier):
        return predictor.spec.dim
    return default


def _check_domain_mass(a: float) -> None:
    if not 0.0 < a < 1.0:
        raise ValidationError(f"the target domain mass a must lie in (0, 1), got {a}")
