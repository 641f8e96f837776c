from __future__ import annotations

import json
import os
import re
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from glshift.errors import SchemaError
from glshift.utils.helpers import to_jsonable

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from glshift.shiftgen import SampleSet

FLOAT_FORMAT = "%.9g"
_TOKENIZE_LINE = re.compile(r"line (\d+)")


def write_samples(path: str | os.PathLike[str], samples: SampleSet) -> None:
    """
    Write a sample set as CSV with the header f0..f{d-1},label,domain and, when present, pred.

    Floats are written with 9 significant digits.
    """
    frame = pd.DataFrame(samples.features, columns=[f"f{i}" for i in range(samples.dim)])
    frame["label"] = samples.labels
    frame["domain"] = samples.domain
    if samples.pseudo_labels is not None:
        frame["pred"] = samples.pseudo_labels
    write_frame(path, frame)


def read_samples(path: str | os.PathLike[str], n_classes: int | None = None) -> SampleSet:
    """
    Read a sample CSV written by ``write_samples``.

    Raises:
        SchemaError: missing columns or an unparsable row; the message names file and line
    """
    frame = _read_csv(path)
    _require(frame, ["label", "domain"], path)
    return _samples_from_frame(frame, path, n_classes, "source")


def read_target_samples(path: str | os.PathLike[str], n_classes: int | None = None) -> tuple[SampleSet, bool]:
    """
    Read target samples, with or without the label and domain columns.

    Returns:
        the sample set and whether the file carried labels; unlabelled files get placeholder
        labels 0 that only fill the sample set
    """
    frame = _read_csv(path)
    labelled = "label" in frame.columns
    if not labelled:
        frame = frame.assign(label="0")
    return _samples_from_frame(frame, path, n_classes, "target"), labelled


def _samples_from_frame(
    frame: pd.DataFrame, path: str | os.PathLike[str], n_classes: int | None, default_domain: str
) -> SampleSet:
    from glshift.shiftgen import SampleSet

    features = [c for c in frame.columns if re.fullmatch(r"f\d+", c)]
    if features != [f"f{i}" for i in range(len(features))] or not features:
        raise SchemaError("expected feature columns f0, f1, ... before label and domain", str(path), 1)

    X = np.column_stack([_numeric(frame, c, path, float) for c in features])
    y = _numeric(frame, "label", path, int)
    domains = set(frame["domain"]) if "domain" in frame.columns else {default_domain}
    if len(domains) > 1:
        raise SchemaError(f"mixed domains {sorted(domains)} in one file", str(path))
    domain = domains.pop() if domains else default_domain
    if domain not in ("source", "target"):
        raise SchemaError(f"unknown domain {domain!r}", str(path), 2)
    pred = _numeric(frame, "pred", path, int) if "pred" in frame.columns else None
    try:
        return SampleSet(X, y, domain, n_classes, pred)
    except ValueError as e:
        raise SchemaError(str(e), str(path)) from e


def read_predictions(path: str | os.PathLike[str], require_labels: bool = False) -> tuple[NDArray[np.int64] | None, NDArray[np.int64]]:
    """
    Labels (None when absent and not required) and predictions from a CSV with a ``pred`` column.
    Other columns, such as the features of a sample CSV, are ignored.
    """
    frame = _read_csv(path)
    _require(frame, ["pred", "label"] if require_labels else ["pred"], path)
    labels = _numeric(frame, "label", path, int) if "label" in frame.columns else None
    return labels, _numeric(frame, "pred", path, int)


def write_frame(path: str | os.PathLike[str], frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_json(path: str | os.PathLike[str], payload: Any) -> None:
    with open(path, "wt") as f:
        f.write(json.dumps(payload, indent=4, sort_keys=True, default=to_jsonable))
        f.write("\n")


def write_json_lines(path: str | os.PathLike[str], records: list[dict[str, Any]]) -> None:
    with open(path, "wt") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=to_jsonable))
            f.write("\n")


def read_json(path: str | os.PathLike[str]) -> Any:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(e.msg, str(path), e.lineno) from e


def _read_csv(path: str | os.PathLike[str]) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise SchemaError("empty file", str(path), 1) from e
    except pd.errors.ParserError as e:
        match = _TOKENIZE_LINE.search(str(e))
        raise SchemaError(str(e).split(". ")[-1], str(path), int(match.group(1)) if match else None) from e


def _require(frame: pd.DataFrame, columns: list[str], path: str | os.PathLike[str]) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing columns {missing}", str(path), 1)


def _numeric(frame: pd.DataFrame, column: str, path: str | os.PathLike[str], kind: type) -> NDArray[Any]:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna().to_numpy()
    if kind is int:
        bad |= ~bad & (values.fillna(0) % 1 != 0).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        # header is line 1
        raise SchemaError(f"column {column!r} has non-{kind.__name__} value {frame[column].iloc[row]!r}", str(path), row + 2)
    return values.to_numpy(dtype=np.int64 if kind is int else float)
