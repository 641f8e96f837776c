import json
import os
import tempfile

import numpy as np
import pytest

from glshift.errors import SchemaError
from glshift.shiftgen import SampleSet
from glshift.utils.data import (
    read_json,
    read_predictions,
    read_samples,
    read_target_samples,
    write_json,
    write_json_lines,
    write_samples,
)


def _write(text: str) -> str:
    path = os.path.join(tempfile.mkdtemp(), "samples.csv")
    with open(path, "w") as f:
        f.write(text)
    return path


def test_samples_round_trip() -> None:
    samples = SampleSet([[0.5, -1.25], [2.0, 3.0], [1e-3, 7.0]], [0, 2, 1], "target", n_classes=3, pseudo_labels=[0, 1, -1])
    path = os.path.join(tempfile.mkdtemp(), "target.csv")

    write_samples(path, samples)
    restored = read_samples(path, n_classes=3)

    with open(path) as f:
        assert f.readline().strip() == "f0,f1,label,domain,pred"
    assert np.array_equal(restored.features, samples.features)
    assert restored.labels.tolist() == [0, 2, 1]
    assert restored.domain == "target"
    assert restored.pseudo_labels is not None
    assert restored.pseudo_labels.tolist() == [0, 1, -1]


def test_bad_rows_are_reported_with_their_line() -> None:
    path = _write("f0,label,domain\n0.1,0,source\n0.2,1,source\nabc,0,source\n")

    with pytest.raises(SchemaError, match=r"samples\.csv:4: .*'f0'") as excinfo:
        read_samples(path)

    assert excinfo.value.line == 4


def test_non_integer_labels() -> None:
    path = _write("f0,label,domain\n0.1,0.5,source\n")

    with pytest.raises(SchemaError, match=":2: "):
        read_samples(path)


def test_missing_columns() -> None:
    with pytest.raises(SchemaError, match=r":1: missing columns \['domain'\]"):
        read_samples(_write("f0,label\n0.1,0\n"))
    with pytest.raises(SchemaError, match=":1: "):
        read_samples(_write("x,label,domain\n0.1,0,source\n"))


def test_domains() -> None:
    with pytest.raises(SchemaError, match="mixed domains"):
        read_samples(_write("f0,label,domain\n0.1,0,source\n0.2,1,target\n"))
    with pytest.raises(SchemaError, match="unknown domain"):
        read_samples(_write("f0,label,domain\n0.1,0,test\n"))


def test_labels_outside_the_classes() -> None:
    with pytest.raises(SchemaError):
        read_samples(_write("f0,label,domain\n0.1,3,source\n"), n_classes=2)


def test_read_predictions() -> None:
    path = _write("f0,label,domain,pred\n0.1,0,source,1\n0.2,1,source,1\n")
    preds_only = _write("pred\n0\n1\n")

    labels, preds = read_predictions(path, require_labels=True)
    no_labels, _ = read_predictions(preds_only)

    assert labels is not None
    assert labels.tolist() == [0, 1]
    assert preds.tolist() == [1, 1]
    assert no_labels is None
    with pytest.raises(SchemaError, match="missing columns"):
        read_predictions(preds_only, require_labels=True)


def test_json_files() -> None:
    temp_dir = tempfile.mkdtemp()
    path = os.path.join(temp_dir, "payload.json")
    lines_path = os.path.join(temp_dir, "payload.jsonl")

    write_json(path, {"b": np.float64(0.5), "a": np.arange(2)})
    write_json_lines(lines_path, [{"x": 1}, {"x": np.int64(2)}])

    assert read_json(path) == {"a": [0, 1], "b": 0.5}
    with open(path) as f:
        text = f.read()
    assert text.index('"a"') < text.index('"b"')
    with open(lines_path) as f:
        assert [json.loads(line)["x"] for line in f] == [1, 2]


def test_malformed_json() -> None:
    path = _write('{\n  "a": 1,\n  "b": ,\n}\n')

    with pytest.raises(SchemaError, match=":3: "):
        read_json(path)


def test_target_samples_without_labels() -> None:
    samples, labelled = read_target_samples(_write("f0,f1\n0.5,1.0\n-2.0,3.0\n"), n_classes=3)

    assert not labelled
    assert samples.domain == "target"
    assert samples.n_classes == 3
    assert np.array_equal(samples.features, [[0.5, 1.0], [-2.0, 3.0]])


def test_labelled_target_samples() -> None:
    samples, labelled = read_target_samples(_write("f0,label,domain\n0.5,2,target\n"), n_classes=3)

    assert labelled
    assert samples.labels.tolist() == [2]
    with pytest.raises(SchemaError, match=r"missing columns \['label'\]"):
        read_samples(_write("f0,domain\n0.5,target\n"))
