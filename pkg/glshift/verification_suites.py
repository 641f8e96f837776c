from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from glshift.bounds import (
    BayesGapCheck,
    BoundCheck,
    ImpossibilityProbe,
    LemmaCheck,
    NecessityCheck,
    ReweightingCheck,
    RiskFloorCheck,
    SufficiencyCheck,
    ZhaoLowerBoundCheck,
    optimal_weights,
)
from glshift.config import ScenarioConfig, SuiteName, VerifyConfig
from glshift.distributions import DiscreteDistribution
from glshift.errors import ValidationError
from glshift.model import ModelParams
from glshift.oracle import BayesClassifier, MonteCarloConfig, Predictor
from glshift.shiftgen import ShiftScenario, make_scenario
from glshift.utils.helpers import rng_stream

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DELTA_SWEEP = np.linspace(0.0, 2.0, 10)
RANDOM_A_VALUES = (0.25, 0.5, 0.75)


def bound_suite(
    version_name: SuiteName,
    scenario_cfg: ScenarioConfig,
    cfg: VerifyConfig,
    seed: int,
    model: Predictor | None = None,
) -> list[BoundCheck]:
    """
    Returns the checks of a named verification suite, filtered to ``cfg.checks`` when given.

    Args:
        version_name: default, randomized or delta_sweep
        scenario_cfg: scenario the default and delta_sweep suites are built on
        cfg: verification settings
        seed: seed of the scenario and of the Monte Carlo estimates
        model: predictor of the risk-based checks; the Bayes classifier of the source by default
    """
    if version_name == "default":
        checks = default_suite(scenario_cfg.build(seed), cfg, seed, model)
    elif version_name == "randomized":
        checks = randomized_suite(cfg, seed)
    elif version_name == "delta_sweep":
        checks = delta_sweep_suite(scenario_cfg, cfg, seed)
    else:
        raise ValidationError(f'Verification suite "{version_name}" does not exist.')
    return select_checks(checks, cfg.checks)


def select_checks(checks: Sequence[BoundCheck], names: Sequence[str] | None) -> list[BoundCheck]:
    """Keep the checks whose base name (before any "/") is listed; None keeps everything."""
    if names is None:
        return list(checks)
    return [c for c in checks if c.name.split("/")[0] in names]


def default_suite(
    scenario: ShiftScenario,
    cfg: VerifyConfig,
    seed: int,
    model: Predictor | None = None,
) -> list[BoundCheck]:
    """
    One check of every kind on a single scenario, at the optimal weights.

    The lemma check runs on the conditional-invariant counterpart of the scenario with w = 1;
    the impossibility probe only applies to 1-D scenarios.
    """
    predictor = model if model is not None else BayesClassifier(scenario.source)
    w_star = optimal_weights(scenario)
    mc = MonteCarloConfig(cfg.mc_samples, seed)
    checks: list[BoundCheck] = [
        SufficiencyCheck(scenario, predictor, w_star, cfg.loss_bound, mc),
        NecessityCheck(scenario, w_star, cfg.a),
        ZhaoLowerBoundCheck(scenario, predictor, mc),
        BayesGapCheck(scenario, w_star, cfg.loss_bound),
        ReweightingCheck(scenario, w_star),
        LemmaCheck(invariant_counterpart(scenario), np.ones(scenario.n_classes), cfg.a),
        RiskFloorCheck(scenario.target, predictor, mc),
    ]
    if scenario.dim == 1:
        checks.append(ImpossibilityProbe(scenario))
    else:
        logger.info(f"Skipping the impossibility probe on a {scenario.dim}-D scenario")
    return checks


def randomized_suite(cfg: VerifyConfig, seed: int) -> list[BoundCheck]:
    """
    ``cfg.n_random`` random 1-D/2-D scenarios, each with random class weights and a random
    affine model: a sufficiency, a Zhao and a lemma check per draw.

    Label distributions are Dirichlet draws mixed half-and-half with the uniform distribution,
    which keeps the label shift moderate.
    """
    checks: list[BoundCheck] = []
    for i in range(cfg.n_random):
        scenario, w, model = random_instance(seed, i)
        mc = MonteCarloConfig(cfg.mc_samples, seed + i)
        checks.extend(
            [
                SufficiencyCheck(scenario, model, w, cfg.loss_bound, mc, name=f"sufficiency/{i}"),
                ZhaoLowerBoundCheck(scenario, model, mc, name=f"zhao/{i}"),
                LemmaCheck(
                    invariant_counterpart(scenario), w, RANDOM_A_VALUES[i % len(RANDOM_A_VALUES)], name=f"lemma/{i}"
                ),
            ]
        )
    return checks


def delta_sweep_suite(scenario_cfg: ScenarioConfig, cfg: VerifyConfig, seed: int) -> list[BoundCheck]:
    """Necessity and Bayes-gap checks at w = w* over ten shift magnitudes in [0, 2]."""
    checks: list[BoundCheck] = []
    for delta in DELTA_SWEEP:
        scenario = scenario_cfg.build(seed, float(delta))
        w_star = optimal_weights(scenario)
        checks.append(NecessityCheck(scenario, w_star, cfg.a, name=f"necessity/delta={delta:.4g}"))
        checks.append(BayesGapCheck(scenario, w_star, cfg.loss_bound, name=f"bayes_gap/delta={delta:.4g}"))
    return checks


def random_instance(seed: int, index: int) -> tuple[ShiftScenario, np.ndarray, ModelParams]:
    """The index-th random (scenario, w, affine model) triple of a seed."""
    rng = rng_stream(seed, "suite", index)
    dim = int(rng.integers(1, 3))
    n_classes = int(rng.integers(2, 4))
    delta = 0.0 if rng.random() < 0.25 else float(rng.uniform(0.2, 2.0))
    uniform = np.full(n_classes, 1.0 / n_classes)
    p = DiscreteDistribution.from_counts(0.5 * rng.dirichlet(np.ones(n_classes)) + 0.5 * uniform)
    q = DiscreteDistribution.from_counts(0.5 * rng.dirichlet(np.ones(n_classes)) + 0.5 * uniform)
    scale = float(rng.uniform(0.6, 1.5))
    scenario = make_scenario(n_classes, dim, delta, p, q, int(rng.integers(2**31)), scale)
    r = rng.uniform(0.3, 2.0, n_classes)
    w = r / float(r @ p.probs)
    model = ModelParams.init(dim, n_classes, hidden=(), d_z=dim, activation="identity", seed=int(rng.integers(2**31)))
    return scenario, w, model


def invariant_counterpart(scenario: ShiftScenario) -> ShiftScenario:
    """The scenario with the target's class conditionals replaced by the source's (delta = 0)."""
    target = scenario.source.with_label_dist(scenario.target.label_dist)
    return ShiftScenario(scenario.source, target, 0.0, scenario.seed)
