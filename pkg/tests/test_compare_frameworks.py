import os
import tempfile

import numpy as np
import pandas as pd
import pytest

from glshift.compare_frameworks import COLUMNS, ComparisonRun, accuracy, compare_frameworks, comparison_table
from glshift.config import CompareConfig, ExperimentConfig, ScenarioConfig
from glshift.shiftgen import SampleSet
from glshift.training import TrainConfig

from .helpers import CONFIGS


def test_comparison_table_summaries() -> None:
    runs = [
        ComparisonRun("gls", "gaussian", 1.0, 0, 0.8, 0.9),
        ComparisonRun("gls", "gaussian", 1.0, 1, 0.9, 0.9),
        ComparisonRun("gls", "gaussian", 1.0, 2, 1.0, 0.9),
        ComparisonRun("covariate", "gaussian", 1.0, 0, 0.7, 0.95),
    ]

    table = comparison_table(runs)

    assert list(table.columns) == COLUMNS
    assert table["kind"].tolist() == ["run"] * 4 + ["summary"] * 2
    gls = table[(table["kind"] == "summary") & (table["framework"] == "gls")].iloc[0]
    assert np.isclose(gls["target_accuracy"], 0.9)
    assert np.isclose(gls["ci_low"], 0.9 - 4.302653 * 0.1 / np.sqrt(3), atol=1e-5)
    covariate = table[(table["kind"] == "summary") & (table["framework"] == "covariate")].iloc[0]
    assert covariate["ci_low"] == covariate["ci_high"] == 0.7
    assert pd.isna(covariate["seed"])


def test_accuracy() -> None:
    samples = SampleSet(np.zeros((4, 1)), [0, 1, 1, 0], "target")

    assert accuracy(np.array([0, 1, 0, 0]), samples) == 0.75


def test_compare_frameworks() -> None:
    scenario_cfg = ScenarioConfig(p_y=[0.6, 0.4], q_y=[0.4, 0.6], directions=[[1.0], [1.0]], n_source=150, n_target=150)
    train_cfg = TrainConfig(max_iters=8, hidden=[4], d_z=2)
    cfg = CompareConfig(frameworks=["label_only", "gls"], seeds=[0, 1])
    temp_dir = tempfile.mkdtemp()

    table = compare_frameworks(scenario_cfg.build(0), scenario_cfg, train_cfg, cfg, temp_dir)

    runs = table[table["kind"] == "run"]
    assert len(runs) == 4
    assert len(table) == 6
    assert runs["framework"].tolist() == ["label_only", "label_only", "gls", "gls"]
    assert runs["target_accuracy"].between(0, 1).all()
    assert os.path.exists(os.path.join(temp_dir, "comparison.csv"))

    again = compare_frameworks(scenario_cfg.build(0), scenario_cfg, train_cfg, cfg)
    assert again.equals(table)


def test_compare_frameworks_with_subsampling() -> None:
    scenario_cfg = ScenarioConfig(n_source=200, n_target=100, subsample_k1=1)
    cfg = CompareConfig(frameworks=["covariate"], seeds=[0], rates=[1.0, 0.3])

    table = compare_frameworks(scenario_cfg.build(0), scenario_cfg, TrainConfig(max_iters=4, hidden=[4], d_z=2), cfg)

    assert table[table["kind"] == "summary"]["rate"].tolist() == [1.0, 0.3]


@pytest.mark.slow
def test_gls_leads_the_framework_ordering_on_the_fixture() -> None:
    cfg = ExperimentConfig.from_json(CONFIGS / "gls_fixture.json")
    compare = CompareConfig(frameworks=["covariate", "conditional_only", "gls"], seeds=list(range(10)), n_jobs=4)

    table = compare_frameworks(cfg.scenario.build(cfg.seed), cfg.scenario, cfg.train, compare)

    runs = table[table["kind"] == "run"].pivot(index="seed", columns="framework", values="target_accuracy")
    ordered = (runs["gls"] >= runs["conditional_only"]) & (runs["conditional_only"] >= runs["covariate"])
    assert ordered.sum() >= 8, runs
    assert runs["gls"].mean() - runs["covariate"].mean() >= 0.03, runs
