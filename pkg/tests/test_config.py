import json
import os
import tempfile
from pathlib import Path

import pytest

from glshift.config import CompareConfig, ExperimentConfig, ScenarioConfig, VerifyConfig
from glshift.errors import ConfigError, SchemaError, ValidationError

CONFIGS = Path(__file__).parent.parent / "configs"


def test_defaults() -> None:
    cfg = ExperimentConfig()

    assert cfg.seed == 0
    assert cfg.out_dir == "out"
    assert cfg.verify.suite == "default"
    assert cfg.compare.seeds == list(range(10))


def test_example_configs_load() -> None:
    two_class = ExperimentConfig.from_json(CONFIGS / "two_class_1d.json")
    fixture = ExperimentConfig.from_json(CONFIGS / "gls_fixture.json")

    assert two_class.scenario.p_y == [0.6, 0.4]
    assert two_class.train.d_z == 1
    assert two_class.out_dir == "out/two_class_1d"
    assert fixture.scenario.n_classes == 3
    assert fixture.scenario.dim == 2


def test_unknown_keys_are_named() -> None:
    with pytest.raises(ConfigError, match="'train.lambda'"):
        ExperimentConfig.from_dict({"train": {"lambda": 1.0}})
    with pytest.raises(ConfigError, match="'output'"):
        ExperimentConfig.from_dict({"output": "x"})


def test_invalid_values() -> None:
    with pytest.raises(ConfigError, match="^verify: "):
        ExperimentConfig.from_dict({"verify": {"a": 1.5}})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"seed": -1})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"seed": "0"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": []})  # type: ignore[dict-item]


def test_config_errors_are_validation_errors() -> None:
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"compare": {"frameworks": ["adversarial"]}})


def test_overrides() -> None:
    cfg = ExperimentConfig().with_overrides(["train.lambda_g=0.25", "verify.checks=[\"lemma\"]", "out_dir=runs/a", "seed=3"])

    assert cfg.train.lambda_g == 0.25
    assert cfg.verify.checks == ["lemma"]
    assert cfg.out_dir == "runs/a"
    assert cfg.seed == 3


def test_bad_overrides() -> None:
    cfg = ExperimentConfig()

    with pytest.raises(ConfigError, match="key=value"):
        cfg.with_overrides(["train.lambda_g"])
    with pytest.raises(ConfigError, match="unknown configuration key"):
        cfg.with_overrides(["train.lambda=1"])
    with pytest.raises(ConfigError, match="unknown configuration key"):
        cfg.with_overrides(["seed.value=1"])
    with pytest.raises(ConfigError):
        cfg.with_overrides(["train.learning_rate=-1"])


def test_round_trip_through_json() -> None:
    cfg = ExperimentConfig.from_json(CONFIGS / "two_class_1d.json")
    temp_dir = tempfile.mkdtemp()
    path = os.path.join(temp_dir, "cfg.json")

    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f)

    assert ExperimentConfig.from_json(path) == cfg


def test_malformed_json_names_the_line() -> None:
    temp_dir = tempfile.mkdtemp()
    path = os.path.join(temp_dir, "cfg.json")
    with open(path, "w") as f:
        f.write('{\n  "seed": 0,\n  "out_dir": \n}\n')

    with pytest.raises(SchemaError, match=r"cfg\.json:4: "):
        ExperimentConfig.from_json(path)


def test_section_validation() -> None:
    with pytest.raises(ValidationError):
        ScenarioConfig(n_source=0)
    with pytest.raises(ValidationError):
        ScenarioConfig(n_classes=2, subsample_k1=3)
    with pytest.raises(ValidationError):
        VerifyConfig(checks=["nonsense"])
    with pytest.raises(ValidationError):
        VerifyConfig(suite="all")  # type: ignore[arg-type]
    with pytest.raises(ValidationError):
        CompareConfig(rates=[0.0])
    with pytest.raises(ValidationError):
        CompareConfig(kernels=["cosine"])


def test_scenario_config_builds_the_scenario() -> None:
    cfg = ScenarioConfig(n_classes=3, dim=2, delta=1.5, p_y=[0.5, 0.3, 0.2], q_y=[0.3, 0.3, 0.4])

    scenario = cfg.build(seed=4)
    swept = cfg.build(seed=4, delta=0.0)

    assert scenario.delta == 1.5
    assert swept.delta == 0.0
    assert scenario.to_dict() == cfg.build(seed=4).to_dict()
    assert ScenarioConfig(n_classes=4).label_dists()[0].to_list() == [0.25] * 4
