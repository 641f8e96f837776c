from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy import stats


def mean_confidence_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """
    Mean of ``values`` with a two-sided Student-t confidence interval.

    Returns:
        (mean, lower, upper); the interval collapses to the mean for fewer than two values
    """
    a = np.asarray(values, dtype=float)
    mean = float(a.mean())
    if len(a) < 2:
        return mean, mean, mean
    half_width = float(stats.t.ppf(0.5 + level / 2, df=len(a) - 1) * stats.sem(a))
    return mean, mean - half_width, mean + half_width
