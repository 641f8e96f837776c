"""
Experiment configuration: one JSON document with a section per concern.

    {
        "scenario": {...},   ScenarioConfig
        "train": {...},      glshift.training.TrainConfig
        "verify": {...},     VerifyConfig
        "compare": {...},    CompareConfig
        "out_dir": "out",
        "seed": 0
    }

Unknown keys are rejected at every level. ``with_overrides`` applies ``section.key=value``
assignments (values parsed as JSON, falling back to plain strings) before validation.
"""

from __future__ import annotations

import dataclasses
import json
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

from glshift.distributions import DiscreteDistribution
from glshift.errors import ConfigError, ValidationError
from glshift.kernels import KERNEL_KINDS
from glshift.objectives import FRAMEWORKS, Framework
from glshift.shiftgen import ShiftScenario, make_scenario
from glshift.training import TrainConfig
from glshift.utils.data import read_json

SuiteName = Literal["default", "randomized", "delta_sweep"]
SUITES: tuple[SuiteName, ...] = ("default", "randomized", "delta_sweep")
CHECK_NAMES = ("sufficiency", "necessity", "zhao", "bayes_gap", "reweighting", "lemma", "risk_floor", "impossibility")


@dataclass
class ScenarioConfig:
    """
    Parameters of a generated scenario; ``p_y`` and ``q_y`` default to the uniform distribution.

    ``subsample_k1`` and ``subsample_rate`` apply the subsampling protocol to the source: the
    first k1 classes keep ceil(rate * n_y) samples.
    """

    n_classes: int = 2
    dim: int = 1
    delta: float = 1.0
    p_y: list[float] | None = None
    q_y: list[float] | None = None
    scale: float = 1.0
    directions: list[list[float]] | None = None
    n_source: int = 1000
    n_target: int = 1000
    subsample_k1: int = 0
    subsample_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.n_source < 1 or self.n_target < 1:
            raise ValidationError("sample sizes must be positive")
        if not 0 <= self.subsample_k1 <= self.n_classes:
            raise ValidationError(f"subsample_k1 must lie in [0, {self.n_classes}]")
        if not 0.0 < self.subsample_rate <= 1.0:
            raise ValidationError("subsample_rate must lie in (0, 1]")

    def label_dists(self) -> tuple[DiscreteDistribution, DiscreteDistribution]:
        uniform = DiscreteDistribution.uniform(self.n_classes)
        p = DiscreteDistribution(self.p_y) if self.p_y is not None else uniform
        q = DiscreteDistribution(self.q_y) if self.q_y is not None else uniform
        return p, q

    def build(self, seed: int, delta: float | None = None) -> ShiftScenario:
        p, q = self.label_dists()
        return make_scenario(
            self.n_classes,
            self.dim,
            self.delta if delta is None else delta,
            p,
            q,
            seed,
            self.scale,
            self.directions,
        )


@dataclass
class VerifyConfig:
    """
    Which bound checks to run: a named suite, optionally filtered to some check names.

    ``model_path`` points to a model JSON used as the predictor of the risk-based checks;
    without it the Bayes classifier of the source is used.
    """

    suite: SuiteName = "default"
    checks: list[str] | None = None
    n_random: int = 200
    a: float = 0.5
    mc_samples: int = 200_000
    loss_bound: float = 1.0
    n_jobs: int = 1
    model_path: str | None = None

    def __post_init__(self) -> None:
        if self.suite not in SUITES:
            raise ValidationError(f"suite must be one of {SUITES}, got {self.suite!r}")
        unknown = sorted(set(self.checks or []) - set(CHECK_NAMES))
        if unknown:
            raise ValidationError(f"unknown checks {unknown}, expected names from {CHECK_NAMES}")
        if not 0.0 < self.a < 1.0:
            raise ValidationError("a must lie in (0, 1)")
        if self.n_random < 1 or self.mc_samples < 2 or self.n_jobs < 1:
            raise ValidationError("n_random, mc_samples and n_jobs must be positive")


@dataclass
class CompareConfig:
    frameworks: list[Framework] = field(default_factory=lambda: list(FRAMEWORKS))
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    rates: list[float] = field(default_factory=lambda: [1.0])
    kernels: list[str] = field(default_factory=lambda: ["gaussian"])
    n_jobs: int = 1

    def __post_init__(self) -> None:
        unknown = sorted(set(self.frameworks) - set(FRAMEWORKS))
        if unknown:
            raise ValidationError(f"unknown frameworks {unknown}")
        if not self.seeds or not self.frameworks or not self.rates or not self.kernels:
            raise ValidationError("frameworks, seeds, rates and kernels must be non-empty")
        if any(k not in KERNEL_KINDS for k in self.kernels):
            raise ValidationError(f"kernels must be taken from {KERNEL_KINDS}")
        if any(not 0.0 < r <= 1.0 for r in self.rates):
            raise ValidationError("rates must lie in (0, 1]")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be positive")


SECTIONS: dict[str, type] = {
    "scenario": ScenarioConfig,
    "train": TrainConfig,
    "verify": VerifyConfig,
    "compare": CompareConfig,
}


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    out_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        """
        Raises:
            ConfigError: unknown keys (named by their dotted path) or invalid values
        """
        if not isinstance(data, dict):
            raise ConfigError("the configuration must be a JSON object")
        _reject_unknown(data, [*SECTIONS, "out_dir", "seed"], "")
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError(f"{name} must be an object")
            _reject_unknown(values, [f.name for f in dataclasses.fields(section_cls)], f"{name}.")
            try:
                sections[name] = section_cls(**values)
            except (ValidationError, TypeError) as e:
                raise ConfigError(f"{name}: {e}") from e
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        return cls(**sections, out_dir=str(data.get("out_dir", "out")), seed=seed)

    @classmethod
    def from_json(cls, path: str | os.PathLike[str]) -> ExperimentConfig:
        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def with_overrides(self, assignments: Sequence[str]) -> ExperimentConfig:
        """
        New config with ``dotted.key=value`` assignments applied, e.g. ``train.lambda_g=1.0``.

        Raises:
            ConfigError: malformed assignment, unknown key or invalid resulting value
        """
        data = self.to_dict()
        for assignment in assignments:
            key, sep, raw = assignment.partition("=")
            if not sep or not key:
                raise ConfigError(f"override {assignment!r} is not of the form key=value")
            *parents, leaf = key.strip().split(".")
            node = data
            for part in parents:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"unknown configuration key {key!r}")
                node = node[part]
            if leaf not in node:
                raise ConfigError(f"unknown configuration key {key!r}")
            node[leaf] = _parse_value(raw)
        return ExperimentConfig.from_dict(data)


def _reject_unknown(values: dict[str, Any], allowed: Sequence[str], prefix: str) -> None:
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown configuration key '{prefix}{unknown[0]}'")


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
