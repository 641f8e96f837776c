from __future__ import annotations

import logging
import os
from collections.abc import Sequence

import pandas as pd

from glshift.bounds import BoundCheck, BoundReport
from glshift.utils.data import write_frame, write_json_lines
from glshift.utils.parallelize import parallelize

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

REPORTS_FILE = "reports.jsonl"
SUMMARY_FILE = "summary.csv"
SUMMARY_COLUMNS = ["name", "lhs", "rhs", "slack", "tolerance", "holds", "status"]


def assess_bounds(
    checks: Sequence[BoundCheck],
    out_dir: str | os.PathLike[str],
    n_jobs: int = 1,
    verbose: int = 0,
) -> list[BoundReport]:
    """
    Runs bound checks and saves their reports.

    Args:
        checks: checks to run, typically a suite from glshift.verification_suites
        out_dir: directory receiving reports.jsonl (one report per line) and summary.csv
        n_jobs: number of worker threads; reports keep the order of ``checks``
        verbose: show a progress bar when non-zero

    Returns:
        the reports, in the order of ``checks``
    """
    reports = _evaluate_checks(checks, n_jobs, verbose)
    os.makedirs(out_dir, exist_ok=True)

    reports_path = os.path.join(out_dir, REPORTS_FILE)
    summary_path = os.path.join(out_dir, SUMMARY_FILE)
    logger.info(f"Save reports to {reports_path} and {summary_path}")
    write_json_lines(reports_path, [r.to_dict() for r in reports])
    write_frame(summary_path, summary_frame(reports))

    statuses = pd.Series([r.status for r in reports], dtype=object).value_counts()
    logger.info(f"Finished {len(reports)} checks: {statuses.to_dict()}")
    return reports


def summary_frame(reports: Sequence[BoundReport]) -> pd.DataFrame:
    """One row per report with the columns of the summary CSV."""
    return pd.DataFrame([{c: getattr(r, c) for c in SUMMARY_COLUMNS} for r in reports], columns=SUMMARY_COLUMNS)


def any_violated(reports: Sequence[BoundReport]) -> bool:
    return any(r.status == "violated" for r in reports)


def _evaluate_checks(checks: Sequence[BoundCheck], n_jobs: int, verbose: int) -> list[BoundReport]:
    """
    Evaluate the checks.
    Should not be called directly except for testing purposes.
    """
    logger.info(f"Number of checks: {len(checks)}")
    jobs = [(i, len(checks), check) for i, check in enumerate(checks, 1)]
    return parallelize(_run_check, jobs, n_jobs=n_jobs, desc="Checking bounds", verbose=verbose)


def _run_check(index: int, total: int, check: BoundCheck) -> BoundReport:
    logger.info(f"Running check {index}/{total}: {check.name}")
    report = check.run()
    logger.debug(f"  {report!r}")
    return report
