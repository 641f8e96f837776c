import json
import os
import tempfile
from pathlib import Path

import pandas as pd
import pytest

from glshift.cli import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, main

TWO_CLASS = str(Path(__file__).parent.parent / "configs" / "two_class_1d.json")
SMALL = ["--set", "scenario.n_source=200", "--set", "scenario.n_target=200"]


def test_gen_prints_the_label_shift(capsys: pytest.CaptureFixture[str]) -> None:
    temp_dir = tempfile.mkdtemp()

    assert main(["gen", "--config", TWO_CLASS, "--out-dir", temp_dir]) == EXIT_OK

    out = capsys.readouterr().out
    assert "P_Y = [0.6, 0.4]" in out
    assert "Q_Y = [0.4, 0.6]" in out
    assert "d_TV(P_Y,Q_Y) = 0.2000" in out
    assert "d_TV(P_Y,Q_Y) empirical = " in out
    assert sorted(os.listdir(temp_dir)) == ["scenario.json", "source.csv", "target.csv"]


def test_gen_is_deterministic() -> None:
    first, second, third = tempfile.mkdtemp(), tempfile.mkdtemp(), tempfile.mkdtemp()

    main(["gen", "--config", TWO_CLASS, "--out-dir", first, "--seed", "1", *SMALL])
    main(["gen", "--config", TWO_CLASS, "--out-dir", second, "--seed", "1", *SMALL])
    main(["gen", "--config", TWO_CLASS, "--out-dir", third, "--seed", "2", *SMALL])

    for name in ("scenario.json", "source.csv", "target.csv"):
        assert Path(first, name).read_bytes() == Path(second, name).read_bytes()
    assert Path(first, "source.csv").read_bytes() != Path(third, "source.csv").read_bytes()


def test_gen_writes_the_documented_columns() -> None:
    temp_dir = tempfile.mkdtemp()

    main(["gen", "--out-dir", temp_dir, "--set", "scenario.dim=2", *SMALL])

    source = pd.read_csv(os.path.join(temp_dir, "source.csv"))
    assert list(source.columns) == ["f0", "f1", "label", "domain"]
    assert set(source["domain"]) == {"source"}
    assert len(source) == 200


def test_invalid_configuration() -> None:
    temp_dir = tempfile.mkdtemp()

    assert main(["gen", "--out-dir", temp_dir, "--set", "train.nope=1"]) == EXIT_INVALID
    assert main(["gen", "--out-dir", temp_dir, "--set", "scenario.p_y=[0.5, 0.6]"]) == EXIT_INVALID
    assert main(["train", "--out-dir", temp_dir, "--source", os.path.join(temp_dir, "missing.csv")]) == EXIT_INVALID


def test_train_from_files() -> None:
    temp_dir = tempfile.mkdtemp()
    main(["gen", "--config", TWO_CLASS, "--out-dir", temp_dir, *SMALL])
    source, target = os.path.join(temp_dir, "source.csv"), os.path.join(temp_dir, "target.csv")

    overrides = ["--set", "train.max_iters=10", "--set", "train.warmup_epochs=2"]
    code = main(["train", "--config", TWO_CLASS, "--out-dir", temp_dir, "--source", source, "--target", target, *overrides])

    assert code == EXIT_OK
    with open(os.path.join(temp_dir, "weights.json")) as f:
        assert len(json.load(f)["w"]) == 2
    assert len(pd.read_csv(os.path.join(temp_dir, "trace.csv"))) == 10
    assert os.path.exists(os.path.join(temp_dir, "model.json"))


def test_train_divergence_exit_code() -> None:
    temp_dir = tempfile.mkdtemp()
    overrides = ["train.learning_rate=1e300", "train.activation=identity", "train.warmup_epochs=0", "train.max_iters=3"]

    code = main(["train", "--out-dir", temp_dir, *SMALL, *[a for o in overrides for a in ("--set", o)]])

    assert code == EXIT_DIVERGED
    assert os.path.exists(os.path.join(temp_dir, "trace.csv"))
    assert not os.path.exists(os.path.join(temp_dir, "model.json"))


def test_weights_from_predictions() -> None:
    temp_dir = tempfile.mkdtemp()
    source, target = os.path.join(temp_dir, "source.csv"), os.path.join(temp_dir, "target.csv")
    pd.DataFrame({"label": [0] * 6 + [1] * 4, "pred": [0] * 5 + [1] + [1] * 3 + [0]}).to_csv(source, index=False)
    pd.DataFrame({"pred": [0] * 4 + [1] * 6}).to_csv(target, index=False)

    for method in ("qp", "pinv"):
        assert main(["weights", "--out-dir", temp_dir, "--source", source, "--target", target, "--method", method]) == EXIT_OK

        with open(os.path.join(temp_dir, "weights.json")) as f:
            weights = json.load(f)
        assert weights["w"][1] > weights["w"][0]


def test_weights_needs_source_labels() -> None:
    temp_dir = tempfile.mkdtemp()
    path = os.path.join(temp_dir, "preds.csv")
    pd.DataFrame({"pred": [0, 1, 1]}).to_csv(path, index=False)

    assert main(["weights", "--out-dir", temp_dir, "--source", path, "--target", path]) == EXIT_INVALID


def test_verify_selected_checks() -> None:
    temp_dir = tempfile.mkdtemp()

    code = main(["verify", "--config", TWO_CLASS, "--out-dir", temp_dir, "--check", "lemma", "--check", "reweighting"])

    assert code == EXIT_OK
    with open(os.path.join(temp_dir, "reports.jsonl")) as f:
        names = [json.loads(line)["name"] for line in f]
    assert names == ["reweighting", "lemma"]
    assert os.path.exists(os.path.join(temp_dir, "summary.csv"))


def test_compare_writes_the_table() -> None:
    temp_dir = tempfile.mkdtemp()
    overrides = [
        "compare.seeds=[0]",
        'compare.frameworks=["label_only"]',
        "train.max_iters=5",
        "train.hidden=[4]",
        "train.d_z=2",
    ]

    code = main(["compare", "--out-dir", temp_dir, *SMALL, *[a for o in overrides for a in ("--set", o)]])

    assert code == EXIT_OK
    table = pd.read_csv(os.path.join(temp_dir, "comparison.csv"))
    assert table["kind"].tolist() == ["run", "summary"]


def test_train_accepts_an_unlabelled_target() -> None:
    temp_dir = tempfile.mkdtemp()
    main(["gen", "--config", TWO_CLASS, "--out-dir", temp_dir, *SMALL])
    source, target = os.path.join(temp_dir, "source.csv"), os.path.join(temp_dir, "features.csv")
    pd.read_csv(os.path.join(temp_dir, "target.csv"))[["f0"]].to_csv(target, index=False)
    overrides = ["--set", "train.max_iters=6", "--set", "train.warmup_epochs=2"]

    code = main(["train", "--config", TWO_CLASS, "--out-dir", temp_dir, "--source", source, "--target", target, *overrides])

    assert code == EXIT_OK
    trace = pd.read_csv(os.path.join(temp_dir, "trace.csv"))
    assert trace["tgt_acc"].isna().all()
    assert trace["weight_error"].isna().all()
    assert trace["tv_label"].notna().all()


def test_every_command_is_deterministic() -> None:
    tiny = [*SMALL, "--set", "train.max_iters=4", "--set", "train.warmup_epochs=1", "--set", "train.hidden=[3]"]
    compare = ["--set", "compare.seeds=[0,1]", "--set", 'compare.frameworks=["covariate","gls"]']
    verify = ["--check", "lemma", "--check", "reweighting"]

    def outputs(command: list[str]) -> dict[str, bytes]:
        temp_dir = tempfile.mkdtemp()
        assert main([*command, "--out-dir", temp_dir]) == EXIT_OK
        return {name: Path(temp_dir, name).read_bytes() for name in sorted(os.listdir(temp_dir))}

    for command in (["train", *tiny], ["compare", *tiny, *compare], ["verify", "--config", TWO_CLASS, *verify]):
        assert outputs(command) == outputs(command)

    temp_dir = tempfile.mkdtemp()
    preds = os.path.join(temp_dir, "preds.csv")
    pd.DataFrame({"label": [0, 0, 1, 1, 1], "pred": [0, 1, 1, 1, 0]}).to_csv(preds, index=False)
    assert outputs(["weights", "--source", preds, "--target", preds]) == outputs(
        ["weights", "--source", preds, "--target", preds]
    )


def test_compare_table_shape() -> None:
    temp_dir = tempfile.mkdtemp()
    overrides = [
        "scenario.n_source=60",
        "scenario.n_target=60",
        "train.max_iters=2",
        "train.warmup_epochs=1",
        "train.hidden=[2]",
        "train.d_z=2",
    ]

    code = main(["compare", "--out-dir", temp_dir, *[a for o in overrides for a in ("--set", o)]])

    assert code == EXIT_OK
    table = pd.read_csv(os.path.join(temp_dir, "comparison.csv"))
    runs, summaries = table[table["kind"] == "run"], table[table["kind"] == "summary"]
    assert len(runs) == 40
    assert len(summaries) == 4
    assert sorted(summaries["framework"]) == sorted(["covariate", "label_only", "conditional_only", "gls"])
    assert (summaries["ci_low"] <= summaries["target_accuracy"]).all()
