"""
End-to-end checks of the generalization inequalities on scenarios and (trained or constructed)
models. Every check produces a BoundReport with the two sides of its inequality, the slack and
the tolerance it was judged with.
"""

from __future__ import annotations

import logging
import math
from abc import abstractmethod
from collections.abc import Mapping, Sequence
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats
from scipy.integrate import trapezoid

from glshift.distributions import MixtureDensity, QuadratureGrid
from glshift.divergences import generalized_js, js_continuous, tv_continuous, tv_distance
from glshift.errors import ValidationError
from glshift.model import ModelParams
from glshift.oracle import (
    MonteCarloConfig,
    Predictor,
    bayes_error,
    conditional_mutual_info,
    domain_specs,
    joint_tv,
    marginal_mutual_info,
    posterior_disagreement,
    true_risk,
)
from glshift.shiftgen import DomainSpec, ShiftScenario
from glshift.utils.helpers import stable_digest
from glshift.weights import ImportanceWeights, oracle_weights

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

BoundKind = Literal["upper", "lower"]
Status = Literal["holds", "violated", "assumption-unmet"]
Transform = tuple[NDArray[np.float64], NDArray[np.float64]]

MC_SIGMAS = 3.0
NECESSITY_TOLERANCE = 1e-4
REWEIGHTING_TOLERANCE = 1e-4
LEMMA_TOLERANCE = 1e-6
PROBE_THRESHOLD = 0.05
PROBE_MIN_LABEL_TV = 0.2
PROBE_MIN_L1 = 0.1
PROBE_SCALES = np.linspace(0.5, 2.0, 31)
PROBE_SHIFT_STEP = 0.05
PROBE_GRID_POINTS = 4097


class BoundReport:
    """
    Outcome of one inequality check.

    ``slack`` is rhs - lhs for upper bounds and lhs - rhs for lower bounds; the check holds when
    the slack is at least minus the tolerance. Reports whose premise fails carry the status
    ``assumption-unmet`` and take no part in pass/fail decisions.
    """

    def __init__(
        self,
        name: str,
        kind: BoundKind,
        lhs: float,
        rhs: float,
        tolerance_breakdown: Mapping[str, float],
        inputs_digest: str,
        assumption_met: bool = True,
        details: Mapping[str, Any] | None = None,
    ) -> None:
        """
        Args:
            name: check name, e.g. "sufficiency"
            kind: "upper" when lhs <= rhs is asserted, "lower" when lhs >= rhs is
            lhs, rhs: the two sides of the inequality
            tolerance_breakdown: non-negative contributions (quadrature, monte_carlo, absolute)
            inputs_digest: stable hash of the inputs the report was computed from
            assumption_met: whether the premise of the inequality holds
            details: check-specific intermediate values
        """
        if kind not in ("upper", "lower"):
            raise ValidationError(f"bound kind must be 'upper' or 'lower', got {kind!r}")
        self.name = name
        self.kind = kind
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.slack = self.rhs - self.lhs if kind == "upper" else self.lhs - self.rhs
        self.tolerance_breakdown = {key: float(value) for key, value in tolerance_breakdown.items()}
        self.tolerance = float(sum(self.tolerance_breakdown.values()))
        self.holds = self.slack >= -self.tolerance
        self.assumption_met = assumption_met
        self.status: Status = "assumption-unmet" if not assumption_met else ("holds" if self.holds else "violated")
        self.inputs_digest = inputs_digest
        self.details = dict(details or {})

    def to_dict(self) -> dict[str, Any]:
        return vars(self).copy()

    def __repr__(self) -> str:
        return (
            f"BoundReport({self.name}: lhs={self.lhs:.6g} {self.kind} rhs={self.rhs:.6g}, "
            f"slack={self.slack:.3g}, tolerance={self.tolerance:.3g}, {self.status})"
        )


class BoundCheck:
    """
    Base class of the inequality checks.

    Derived classes hold their inputs and implement ``run``.
    """

    def __init__(self, name: str) -> None:
        self.name = name

    @abstractmethod
    def run(self) -> BoundReport:
        """Evaluate both sides of the inequality and return the report."""

    def _report(self, kind: BoundKind, lhs: float, rhs: float, tolerance: Mapping[str, float], inputs: Mapping[str, Any], **kwargs: Any) -> BoundReport:
        report = BoundReport(self.name, kind, lhs, rhs, tolerance, stable_digest({"check": self.name, **inputs}), **kwargs)
        if report.status == "assumption-unmet":
            logger.warning(f"{self.name}: premise not met, report excluded from pass/fail")
        elif report.status == "violated":
            logger.warning(f"{self.name}: violated by {-report.slack:.3e} (tolerance {report.tolerance:.3e})")
        return report


class SufficiencyCheck(BoundCheck):
    """
    |eps_{P^w}(h) - eps_Q(h)| <= 2M [TV(P^w_Y, Q_Y) + min(E_{P^w_Y}, E_{Q_Y}) TV(P^w_{Z|Y}, Q_{Z|Y})].

    The conditional term is computed in representation space when the model's g is affine with
    full row rank and d_z <= 3, otherwise in feature space, which only loosens the bound.
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        model: Predictor,
        w: ImportanceWeights | ArrayLike,
        loss_bound: float = 1.0,
        mc: MonteCarloConfig | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "sufficiency",
    ) -> None:
        super().__init__(name)
        if loss_bound <= 0:
            raise ValidationError(f"loss bound must be positive, got {loss_bound}")
        self.scenario = scenario
        self.model = model
        self.w = _weights_array(w)
        self.loss_bound = loss_bound
        self.mc = mc or MonteCarloConfig()
        self.grid = grid

    def run(self) -> BoundReport:
        p_spec, q_spec = domain_specs(self.scenario, self.w)
        # same stream for both domains: common random numbers for the risk difference
        risk_p = true_risk(p_spec, self.model, "zero_one", self.mc)
        risk_q = true_risk(q_spec, self.model, "zero_one", self.mc)
        lhs = abs(risk_p.value - risk_q.value)

        space, transform = _representation(self.model)
        label_tv = tv_distance(p_spec.label_dist, q_spec.label_dist)
        tvs, errors = _conditional_tvs(self.scenario, self.w, space, transform, self.grid)
        expected_p = float(p_spec.label_dist.probs @ tvs)
        expected_q = float(q_spec.label_dist.probs @ tvs)
        M = self.loss_bound
        rhs = 2 * M * (label_tv + min(expected_p, expected_q))
        quadrature = 2 * M * float(max(p_spec.label_dist.probs @ errors, q_spec.label_dist.probs @ errors))
        monte_carlo = MC_SIGMAS * math.hypot(risk_p.stderr, risk_q.stderr)
        return self._report(
            "upper",
            lhs,
            rhs,
            {"quadrature": quadrature, "monte_carlo": monte_carlo, "absolute": 0.0},
            _inputs(self.scenario, self.w, self.model, loss_bound=M, mc=vars(self.mc)),
            details={
                "risk_source_weighted": risk_p.value,
                "risk_target": risk_q.value,
                "stderr": [risk_p.stderr, risk_q.stderr],
                "label_tv": label_tv,
                "conditional_tv": tvs.tolist(),
                "expected_conditional_tv": [expected_p, expected_q],
                "space": space,
            },
        )


class NecessityCheck(BoundCheck):
    """
    Posterior disagreement >= I^w(Z;D|Y) / (2 (1 - b)) with b = min(a, 1 - a), under the premise
    d_JS,a(P^w_Y, Q_Y) >= d_JS,a(P^w_Z, Q_Z).
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        w: ImportanceWeights | ArrayLike,
        a: float = 0.5,
        transform: ModelParams | Transform | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "necessity",
    ) -> None:
        super().__init__(name)
        self.scenario = scenario
        self.w = _weights_array(w)
        self.a = a
        self.transform = transform
        self.grid = grid

    def run(self) -> BoundReport:
        mutual = marginal_mutual_info(self.scenario, self.w, self.a, self.transform, self.grid)
        assumption_met = mutual.label_term >= mutual.feature_term.value - mutual.feature_term.error - LEMMA_TOLERANCE
        disagreement = posterior_disagreement(self.scenario, self.w, self.transform, self.grid)
        conditional = conditional_mutual_info(self.scenario, self.w, self.a, self.transform, self.grid)
        b = min(self.a, 1.0 - self.a)
        scale = 1.0 / (2.0 * (1.0 - b))
        return self._report(
            "lower",
            disagreement.value,
            scale * conditional.value,
            {
                "quadrature": disagreement.error + scale * conditional.error,
                "monte_carlo": 0.0,
                "absolute": NECESSITY_TOLERANCE,
            },
            _inputs(self.scenario, self.w, self.transform, a=self.a),
            assumption_met=assumption_met,
            details={
                "a": self.a,
                "b": b,
                "conditional_mutual_info": conditional.value,
                "label_js": mutual.label_term,
                "feature_js": mutual.feature_term.value,
                "assumption_slack": mutual.slack,
            },
        )


class ZhaoLowerBoundCheck(BoundCheck):
    """
    eps_P(h) + eps_Q(h) >= (1/2) (d_JS(P_Y, Q_Y) - d_JS(P_Z, Q_Z))^2 when d_JS(P_Y, Q_Y) >= d_JS(P_Z, Q_Z).

    The right-hand side uses JS divergences; the form with JS distances (square roots) is
    reported alongside in ``details`` together with whether the two forms agree.
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        model: Predictor,
        mc: MonteCarloConfig | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "zhao",
    ) -> None:
        super().__init__(name)
        self.scenario = scenario
        self.model = model
        self.mc = mc or MonteCarloConfig()
        self.grid = grid

    def run(self) -> BoundReport:
        source, target = self.scenario.source, self.scenario.target
        risk_p = true_risk(source, self.model, "zero_one", self.mc)
        risk_q = true_risk(target, self.model, "zero_one", self.mc)
        lhs = risk_p.value + risk_q.value

        js_label = generalized_js(source.label_dist, target.label_dist)
        space, transform = _representation(self.model)
        if space == "point":
            js_feature, quadrature = 0.0, 0.0
        else:
            p_spec, q_spec = domain_specs(self.scenario, None, transform)
            estimate = js_continuous(p_spec.marginal(), q_spec.marginal(), 0.5, self.grid)
            js_feature, quadrature = estimate.value, estimate.error
        assumption_met = js_label >= js_feature - quadrature - LEMMA_TOLERANCE
        gap = max(js_label - js_feature, 0.0)
        rhs = 0.5 * gap**2
        distance_rhs = 0.5 * max(math.sqrt(js_label) - math.sqrt(js_feature), 0.0) ** 2
        monte_carlo = MC_SIGMAS * math.hypot(risk_p.stderr, risk_q.stderr)
        return self._report(
            "lower",
            lhs,
            rhs,
            # d(rhs)/d(js_feature) = -gap
            {"quadrature": gap * quadrature, "monte_carlo": monte_carlo, "absolute": 0.0},
            _inputs(self.scenario, None, self.model, mc=vars(self.mc)),
            assumption_met=assumption_met,
            details={
                "risk_source": risk_p.value,
                "risk_target": risk_q.value,
                "label_js": js_label,
                "feature_js": js_feature,
                "space": space,
                "distance_form_rhs": distance_rhs,
                "distance_form_holds": lhs - distance_rhs >= -monte_carlo,
                "forms_disagree": (lhs >= rhs) != (lhs >= distance_rhs),
            },
        )


class BayesGapCheck(BoundCheck):
    """|eps^Bayes_{P^w} - eps^Bayes_Q| <= 2M TV(P^w_{ZY}, Q_{ZY})."""

    def __init__(
        self,
        scenario: ShiftScenario,
        w: ImportanceWeights | ArrayLike,
        loss_bound: float = 1.0,
        transform: ModelParams | Transform | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "bayes_gap",
    ) -> None:
        super().__init__(name)
        self.scenario = scenario
        self.w = _weights_array(w)
        self.loss_bound = loss_bound
        self.transform = transform
        self.grid = grid

    def run(self) -> BoundReport:
        p_spec, q_spec = domain_specs(self.scenario, self.w, self.transform)
        error_p = bayes_error(p_spec, self.grid)
        error_q = bayes_error(q_spec, self.grid)
        tv = joint_tv(self.scenario, self.w, self.transform, self.grid)
        M = self.loss_bound
        return self._report(
            "upper",
            abs(error_p.value - error_q.value),
            2 * M * tv.value,
            {"quadrature": error_p.error + error_q.error + 2 * M * tv.error, "monte_carlo": 0.0, "absolute": 0.0},
            _inputs(self.scenario, self.w, self.transform, loss_bound=M),
            details={"bayes_error_source_weighted": error_p.value, "bayes_error_target": error_q.value, "joint_tv": tv.value},
        )


class ReweightingCheck(BoundCheck):
    """
    TV(P^w_{ZY}, Q_{ZY}) <= TV(P^w_Y, Q_Y) + E_{P^w_Y} TV(P^w_{Z|Y}, Q_{Z|Y}); both sides vanish
    at w = w* when the class conditionals agree.
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        w: ImportanceWeights | ArrayLike,
        transform: ModelParams | Transform | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "reweighting",
    ) -> None:
        super().__init__(name)
        self.scenario = scenario
        self.w = _weights_array(w)
        self.transform = transform
        self.grid = grid

    def run(self) -> BoundReport:
        p_spec, q_spec = domain_specs(self.scenario, self.w, self.transform)
        tv = joint_tv(self.scenario, self.w, self.transform, self.grid)
        tvs, errors = _conditional_tvs(self.scenario, self.w, "z" if self.transform is not None else "x", _as_transform(self.transform), self.grid)
        label_tv = tv_distance(p_spec.label_dist, q_spec.label_dist)
        probs = p_spec.label_dist.probs
        return self._report(
            "upper",
            tv.value,
            label_tv + float(probs @ tvs),
            {"quadrature": tv.error + float(probs @ errors), "monte_carlo": 0.0, "absolute": REWEIGHTING_TOLERANCE},
            _inputs(self.scenario, self.w, self.transform),
            details={"label_tv": label_tv, "conditional_tv": tvs.tolist()},
        )


class LemmaCheck(BoundCheck):
    """
    d_JS,a(P^w_Y, Q_Y) >= d_JS,a(P^w_Z, Q_Z) for a conditional-invariant representation.

    Only scenarios whose class conditionals agree (delta = 0, identity representation) satisfy
    the premise; other scenarios are reported as assumption-unmet.
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        w: ImportanceWeights | ArrayLike,
        a: float = 0.5,
        grid: QuadratureGrid | None = None,
        name: str = "lemma",
    ) -> None:
        super().__init__(name)
        self.scenario = scenario
        self.w = _weights_array(w)
        self.a = a
        self.grid = grid

    def run(self) -> BoundReport:
        mutual = marginal_mutual_info(self.scenario, self.w, self.a, None, self.grid)
        return self._report(
            "lower",
            mutual.label_term,
            mutual.feature_term.value,
            {"quadrature": mutual.feature_term.error, "monte_carlo": 0.0, "absolute": LEMMA_TOLERANCE},
            _inputs(self.scenario, self.w, None, a=self.a),
            assumption_met=self.scenario.delta == 0,
            details={"a": self.a},
        )


class RiskFloorCheck(BoundCheck):
    """The zero-one risk of any classifier is at least the Bayes error of its domain."""

    def __init__(
        self,
        spec: DomainSpec,
        model: Predictor,
        mc: MonteCarloConfig | None = None,
        grid: QuadratureGrid | None = None,
        name: str = "risk_floor",
    ) -> None:
        super().__init__(name)
        self.spec = spec
        self.model = model
        self.mc = mc or MonteCarloConfig()
        self.grid = grid

    def run(self) -> BoundReport:
        risk = true_risk(self.spec, self.model, "zero_one", self.mc)
        floor = bayes_error(self.spec, self.grid)
        inputs = {"spec": self.spec.to_dict(), "model": _model_dict(self.model), "mc": vars(self.mc)}
        return self._report(
            "lower",
            risk.value,
            floor.value,
            {"quadrature": floor.error, "monte_carlo": MC_SIGMAS * risk.stderr, "absolute": 0.0},
            inputs,
            details={"stderr": risk.stderr},
        )


class ImpossibilityProbe(BoundCheck):
    """
    Grid search over affine maps z = s x + t applied to the target (the source keeps the
    identity) of a 1-D scenario with label shift.

    For every candidate the marginal TV(P_Z, Q_Z) and the conditional TV E_{P_Y} TV(P_{Z|Y}, Q_{Z|Y})
    are computed; lhs is the smallest max{marginal, conditional} over the family and the check
    asserts lhs >= threshold, i.e. no candidate aligns both. With too little label shift the
    report is assumption-unmet.
    """

    def __init__(
        self,
        scenario: ShiftScenario,
        threshold: float = PROBE_THRESHOLD,
        scales: Sequence[float] | None = None,
        shift_step: float = PROBE_SHIFT_STEP,
        grid_points: int = PROBE_GRID_POINTS,
        name: str = "impossibility",
    ) -> None:
        super().__init__(name)
        if scenario.dim != 1:
            raise ValidationError(f"the impossibility probe needs a 1-D scenario, got dimension {scenario.dim}")
        self.scenario = scenario
        self.threshold = threshold
        self.scales = np.asarray(PROBE_SCALES if scales is None else scales, dtype=float)
        if np.any(self.scales <= 0):
            raise ValidationError("probe scales must be positive")
        self.shift_step = shift_step
        self.grid_points = grid_points

    def run(self) -> BoundReport:
        source, target = self.scenario.source, self.scenario.target
        label_tv = tv_distance(source.label_dist, target.label_dist)
        enough_label_shift = label_tv >= PROBE_MIN_LABEL_TV - 1e-12
        if not enough_label_shift:
            logger.warning(f"Label shift TV(P_Y, Q_Y) = {label_tv:.3f} is below {PROBE_MIN_LABEL_TV}")

        shifts = self._shifts()
        z = self._grid(shifts)
        source_cond = np.stack([_mixture_pdf_1d(c, z, 1.0, 0.0) for c in source.class_conditionals])
        self._check_distinct(source_cond, z, "source")
        self._check_distinct(np.stack([_mixture_pdf_1d(c, z, 1.0, 0.0) for c in target.class_conditionals]), z, "target")
        source_marginal = source.label_dist.probs @ source_cond

        marginal_tv = np.empty((len(self.scales), len(shifts)))
        conditional_tv = np.empty_like(marginal_tv)
        for i, s in enumerate(self.scales):
            # (K, n_shifts, n_grid) target class densities after z = s x + t
            moved = np.stack([_mixture_pdf_1d(c, z, s, shifts) for c in target.class_conditionals])
            marginal = np.tensordot(target.label_dist.probs, moved, axes=1)
            marginal_tv[i] = 0.5 * trapezoid(np.abs(marginal - source_marginal), z, axis=-1)
            per_class = 0.5 * trapezoid(np.abs(moved - source_cond[:, None, :]), z, axis=-1)
            conditional_tv[i] = source.label_dist.probs @ per_class

        worst = np.maximum(marginal_tv, conditional_tv)
        i, j = np.unravel_index(np.argmin(worst), worst.shape)
        best_scale, best_shift = float(self.scales[i]), float(shifts[j])
        lhs = float(worst[i, j])
        quadrature = abs(lhs - self._coarse_value(z, best_scale, best_shift))
        both_below = bool(np.any((marginal_tv < self.threshold) & (conditional_tv < self.threshold)))
        return self._report(
            "lower",
            lhs,
            self.threshold,
            {"quadrature": quadrature, "monte_carlo": 0.0, "absolute": 0.0},
            _inputs(self.scenario, None, None, threshold=self.threshold, scales=self.scales, shift_step=self.shift_step),
            assumption_met=enough_label_shift,
            details={
                "label_tv": label_tv,
                "best_scale": best_scale,
                "best_shift": best_shift,
                "best_marginal_tv": float(marginal_tv[i, j]),
                "best_conditional_tv": float(conditional_tv[i, j]),
                "both_below_threshold": both_below,
                "pareto_front": pareto_front(marginal_tv.ravel(), conditional_tv.ravel()),
            },
        )

    def _shifts(self) -> NDArray[np.float64]:
        means = [c.mean[0] for spec in (self.scenario.source, self.scenario.target) for m in spec.class_conditionals for c in m.components]
        stds = [c.marginal_std[0] for spec in (self.scenario.source, self.scenario.target) for m in spec.class_conditionals for c in m.components]
        reach = 2.0 * max(abs(mu) for mu in means) + 3.0 * max(stds)
        n = math.ceil(reach / self.shift_step)
        return np.linspace(-n * self.shift_step, n * self.shift_step, 2 * n + 1)

    def _grid(self, shifts: NDArray[np.float64]) -> NDArray[np.float64]:
        components = [c for spec in (self.scenario.source, self.scenario.target) for m in spec.class_conditionals for c in m.components]
        s_max = float(self.scales.max())
        lows, highs = [], []
        for c in components:
            mu, sd = float(c.mean[0]), float(c.marginal_std[0])
            reach = 8.0 * sd * max(s_max, 1.0)
            extremes = [mu, self.scales.min() * mu, s_max * mu]
            lows.append(min(extremes) + shifts[0] - reach)
            highs.append(max(extremes) + shifts[-1] + reach)
        return np.linspace(min(lows), max(highs), self.grid_points)

    def _coarse_value(self, z: NDArray[np.float64], scale: float, shift: float) -> float:
        coarse = z[::2]
        source, target = self.scenario.source, self.scenario.target
        source_cond = np.stack([_mixture_pdf_1d(c, coarse, 1.0, 0.0) for c in source.class_conditionals])
        moved = np.stack([_mixture_pdf_1d(c, coarse, scale, shift) for c in target.class_conditionals])
        marginal = 0.5 * trapezoid(np.abs(target.label_dist.probs @ moved - source.label_dist.probs @ source_cond), coarse)
        conditional = source.label_dist.probs @ (0.5 * trapezoid(np.abs(moved - source_cond), coarse, axis=-1))
        return float(max(marginal, conditional))

    @staticmethod
    def _check_distinct(densities: NDArray[np.float64], z: NDArray[np.float64], side: str) -> None:
        for a in range(len(densities)):
            for b in range(a + 1, len(densities)):
                l1 = float(trapezoid(np.abs(densities[a] - densities[b]), z))
                if l1 < PROBE_MIN_L1:
                    raise ValidationError(
                        f"{side} class conditionals {a} and {b} are too close (L1 distance {l1:.3g} < {PROBE_MIN_L1})"
                    )


def pareto_front(marginal: ArrayLike, conditional: ArrayLike) -> list[tuple[float, float]]:
    """Non-dominated (marginal, conditional) pairs, sorted by increasing marginal TV."""
    x = np.asarray(marginal, dtype=float)
    y = np.asarray(conditional, dtype=float)
    front: list[tuple[float, float]] = []
    best = math.inf
    for k in np.lexsort((y, x)):
        if y[k] < best:
            front.append((float(x[k]), float(y[k])))
            best = y[k]
    return front


def sufficiency_check(
    scenario: ShiftScenario,
    m: Predictor,
    w: ImportanceWeights | ArrayLike,
    loss_bound: float = 1.0,
    mc: MonteCarloConfig | None = None,
    grid: QuadratureGrid | None = None,
) -> BoundReport:
    return SufficiencyCheck(scenario, m, w, loss_bound, mc, grid).run()


def necessity_check(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike,
    a: float = 0.5,
    transform: ModelParams | Transform | None = None,
    grid: QuadratureGrid | None = None,
) -> BoundReport:
    return NecessityCheck(scenario, w, a, transform, grid).run()


def zhao_lower_bound_check(
    scenario: ShiftScenario,
    m: Predictor,
    mc: MonteCarloConfig | None = None,
    grid: QuadratureGrid | None = None,
) -> BoundReport:
    return ZhaoLowerBoundCheck(scenario, m, mc, grid).run()


def bayes_gap_check(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike,
    loss_bound: float = 1.0,
    grid: QuadratureGrid | None = None,
) -> BoundReport:
    return BayesGapCheck(scenario, w, loss_bound, grid=grid).run()


def reweighting_check(
    scenario: ShiftScenario,
    w: ImportanceWeights | ArrayLike,
    grid: QuadratureGrid | None = None,
) -> BoundReport:
    return ReweightingCheck(scenario, w, grid=grid).run()


def lemma_check(scenario: ShiftScenario, w: ImportanceWeights | ArrayLike, a: float = 0.5) -> BoundReport:
    return LemmaCheck(scenario, w, a).run()


def risk_floor_check(spec: DomainSpec, m: Predictor, mc: MonteCarloConfig | None = None) -> BoundReport:
    return RiskFloorCheck(spec, m, mc).run()


def impossibility_probe(scenario: ShiftScenario, threshold: float = PROBE_THRESHOLD) -> BoundReport:
    return ImpossibilityProbe(scenario, threshold).run()


def optimal_weights(scenario: ShiftScenario) -> ImportanceWeights:
    """w* = q_Y / p_Y of a scenario."""
    return oracle_weights(scenario.source.label_dist, scenario.target.label_dist)


def _weights_array(w: ImportanceWeights | ArrayLike) -> NDArray[np.float64]:
    return np.asarray(getattr(w, "w", w), dtype=float)


def _representation(model: Predictor) -> tuple[str, Transform | None]:
    """
    Where conditional divergences of ``model`` can be computed exactly: "z" with its affine map,
    "point" for a constant g, or "x" (feature space) otherwise.
    """
    if not isinstance(model, ModelParams) or not model.is_affine():
        return "x", None
    M, c = model.affine_map()
    if not np.any(M):
        return "point", (M, c)
    if np.linalg.matrix_rank(M) < M.shape[0] or M.shape[0] > 3:
        return "x", None
    return "z", (M, c)


def _as_transform(transform: ModelParams | Transform | None) -> Transform | None:
    if transform is None or not isinstance(transform, ModelParams):
        return transform
    return transform.affine_map()


def _conditional_tvs(
    scenario: ShiftScenario,
    w: NDArray[np.float64],
    space: str,
    transform: Transform | None,
    grid: QuadratureGrid | None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-class TV(P^w_{Z|Y=y}, Q_{Z|Y=y}) and their quadrature errors."""
    K = scenario.n_classes
    if space == "point":
        return np.zeros(K), np.zeros(K)
    p_spec, q_spec = domain_specs(scenario, w, transform if space == "z" else None)
    tvs, errors = np.zeros(K), np.zeros(K)
    for y, (f_p, f_q) in enumerate(zip(p_spec.class_conditionals, q_spec.class_conditionals)):
        if f_p.same_as(f_q):
            continue
        estimate = tv_continuous(f_p, f_q, grid)
        tvs[y], errors[y] = estimate.value, estimate.error
    return tvs, errors


def _mixture_pdf_1d(mixture: MixtureDensity, z: NDArray[np.float64], scale: float, shift: float | NDArray[np.float64]) -> NDArray[np.float64]:
    """Density of s X + t on the points z; an array of shifts adds a leading axis."""
    t = np.asarray(shift, dtype=float)[..., None]
    total = np.zeros(np.broadcast_shapes(t.shape, z.shape))
    for weight, c in zip(mixture.weights.probs, mixture.components):
        total = total + weight * stats.norm.pdf(z, loc=scale * c.mean[0] + t, scale=scale * c.marginal_std[0])
    return total


def _model_dict(model: Predictor | None) -> Any:
    if model is None:
        return None
    if hasattr(model, "to_dict"):
        return model.to_dict()
    spec = getattr(model, "spec", None)
    if spec is not None:
        return {"bayes_classifier": spec.to_dict()}
    return type(model).__name__


def _inputs(scenario: ShiftScenario, w: NDArray[np.float64] | None, model: Any, **extra: Any) -> dict[str, Any]:
    if isinstance(model, tuple):
        described = {"matrix": np.asarray(model[0]).tolist(), "offset": np.asarray(model[1]).tolist()}
    else:
        described = _model_dict(model)
    return {
        "scenario": scenario.to_dict(),
        "w": None if w is None else np.asarray(w).tolist(),
        "model": described,
        **extra,
    }

