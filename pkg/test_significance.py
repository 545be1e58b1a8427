#!/usr/bin/env python3
"""
Tests for the paired t-test on reciprocal ranks
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from sphere_kge.exceptions import DimensionMismatchError
from sphere_kge.significance import paired_ttest, student_t_two_sided


def t_density(x: float, df: int) -> float:
    log_norm = gammaln((df + 1) / 2) - gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(log_norm - (df + 1) / 2 * math.log1p(x * x / df))


def two_sided_by_integration(t: float, df: int) -> float:
    tail, _ = integrate.quad(t_density, abs(t), np.inf, args=(df,), epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2 * tail


def test_identical_lists_are_degenerate():
    result = paired_ttest([0.5, 1.0, 0.25], [0.5, 1.0, 0.25])
    assert result.degenerate
    assert result.p_value == 1.0
    assert result.t == 0.0


def test_constant_nonzero_difference():
    result = paired_ttest([1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0])
    assert result.degenerate
    assert result.p_value == 0.0
    assert result.t == math.inf


def test_constant_difference_up_to_rounding():
    result = paired_ttest([1 / 2, 1 / 3, 1 / 4], [1 / 3, 1 / 6, 1 / 12])
    assert result.degenerate
    assert result.p_value == 0.0
    assert result.t == math.inf


@pytest.mark.parametrize("case", range(20))
def test_p_value_matches_integrated_density(case):
    rng = np.random.default_rng(case)
    rr_b = rng.uniform(0.05, 1.0, size=20)
    rr_a = rr_b + rng.normal(loc=0.05 * (case % 5), scale=0.2, size=20)
    result = paired_ttest(rr_a, rr_b)
    assert result.p_value == pytest.approx(two_sided_by_integration(result.t, 19), abs=1e-6)


def test_agrees_with_scipy():
    rng = np.random.default_rng(42)
    a, b = rng.uniform(size=50), rng.uniform(size=50)
    result = paired_ttest(a, b)
    reference = stats.ttest_rel(a, b)
    assert result.t == pytest.approx(reference.statistic, rel=1e-12)
    assert result.p_value == pytest.approx(reference.pvalue, rel=1e-9)
    assert result.n == 50


def test_symmetry():
    rng = np.random.default_rng(7)
    a, b = rng.uniform(size=30), rng.uniform(size=30)
    forward, backward = paired_ttest(a, b), paired_ttest(b, a)
    assert forward.t == pytest.approx(-backward.t)
    assert forward.p_value == pytest.approx(backward.p_value)


def test_tail_probability_edges():
    assert student_t_two_sided(0.0, 5) == pytest.approx(1.0)
    assert student_t_two_sided(math.inf, 5) == 0.0


def test_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        paired_ttest([1.0, 0.5], [1.0])


def test_needs_two_pairs():
    with pytest.raises(ValueError):
        paired_ttest([1.0], [0.5])
