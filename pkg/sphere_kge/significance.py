"""
Significance Testing Module

Paired Student t-test on per-query reciprocal ranks of two models.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np
from scipy.special import betainc

from .exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TTestResult:
    """Outcome of a paired t-test."""

    t: float
    p_value: float
    n: int
    mean_difference: float
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return {
            "t": self.t,
            "p_value": self.p_value,
            "n": self.n,
            "mean_difference": self.mean_difference,
            "degenerate": self.degenerate,
        }


def student_t_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) via the regularized incomplete beta function."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(rr_a: Sequence[float], rr_b: Sequence[float]) -> TTestResult:
    """
    Paired t-test on differences d = rr_a - rr_b.

    When every difference is identical the statistic is undefined; the result
    is flagged degenerate with p = 1 if the mean difference is 0, else p = 0.

    Args:
        rr_a: Reciprocal ranks of model A
        rr_b: Reciprocal ranks of model B on the same queries, same order

    Returns:
        t statistic and two-sided p-value with n - 1 degrees of freedom
    """
    a = np.asarray(rr_a, dtype=np.float64)
    b = np.asarray(rr_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(a.shape, b.shape, "reciprocal rank list")
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"Paired t-test needs at least 2 paired values, got {a.size}")

    diff = a - b
    n = int(diff.size)
    mean = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1))

    # differences constant up to rounding count as zero variance
    if sd <= 1e-12 * max(1.0, abs(mean)):
        if abs(mean) <= 1e-12:
            logger.warning("Paired differences are all zero; reporting p = 1")
            return TTestResult(t=0.0, p_value=1.0, n=n, mean_difference=0.0, degenerate=True)
        logger.warning("Paired differences have zero variance and nonzero mean; reporting p = 0")
        return TTestResult(t=math.copysign(math.inf, mean), p_value=0.0, n=n,
                           mean_difference=mean, degenerate=True)

    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p_value=student_t_two_sided(t, n - 1), n=n, mean_difference=mean)
