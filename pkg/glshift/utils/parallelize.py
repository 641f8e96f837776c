"""Fan independent jobs out over joblib workers with an optional progress bar."""

from __future__ import annotations

import os
from typing import TYPE_CHECKING, Literal, TypeVar

import joblib
from tqdm import tqdm
from typing_extensions import TypeVarTuple, Unpack

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

T = TypeVar("T")
TupT = TypeVarTuple("TupT")


def parallelize(
    func: Callable[[Unpack[TupT]], T],
    jobs_args: Sequence[tuple[Unpack[TupT]]],
    n_jobs: int = 1,
    desc: str | None = None,
    leave: bool = True,
    verbose: int = 0,
    prefer: Literal["threads", "processes"] = "threads",
) -> list[T]:
    """Run ``func`` once per argument tuple and collect the results.

    Each job must be deterministic on its own; results come back in input order, so the
    output does not depend on the worker count.

    Args:
        func: Function to run. Only positional arguments are supported.
        jobs_args: Arguments for the function, one tuple per call.
        n_jobs: Number of workers; 1 runs serially in the calling thread.
            Overwritten by the "GLSHIFT_PROC" environment variable if set.
        desc: Description shown on the progress bar.
        leave: Whether to leave the progress bar after the task is done.
        verbose: Verbosity level, 0 hides the progress bar.
        prefer: joblib backend preference. Threads suit the numpy-bound jobs of this package.

    Returns:
        List of results from the function in order of inputs.
    """
    env_jobs = os.getenv("GLSHIFT_PROC")
    n_jobs = int(env_jobs) if env_jobs else n_jobs
    progress = {"desc": desc, "total": len(jobs_args), "leave": leave, "disable": verbose == 0}

    if n_jobs == 1:
        return [func(*args) for args in tqdm(jobs_args, **progress)]

    jobs = [joblib.delayed(func)(*args) for args in jobs_args]
    with joblib.Parallel(n_jobs=n_jobs, prefer=prefer, return_as="generator") as p:
        return list(tqdm(p(jobs), **progress))
