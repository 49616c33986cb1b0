"""Welch's unequal-variance two-sample t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as t_dist


@dataclass(frozen=True)
class WelchResult:
    t_statistic: float
    p_value: float
    dof: float


def welch_t_test(a, b) -> WelchResult:
    """Two-sided Welch test; p from the t CDF with Welch-Satterthwaite dof.

    Convention: zero variance in both samples with equal means gives p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(0.0, 1.0, float(na + nb - 2))
        return WelchResult(math.inf if ma > mb else -math.inf, 0.0, float(na + nb - 2))
    t = (ma - mb) / math.sqrt(se2)
    denom = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    # denom can underflow to zero for denormal variances even when se2 > 0
    dof = se2**2 / denom if denom > 0.0 else float(na + nb - 2)
    p = 2.0 * float(t_dist.sf(abs(t), dof))
    return WelchResult(float(t), min(p, 1.0), float(dof))
