"""Importance sampling diagnostics, replicate statistics, and sample
allocation planning.

The delta-method constants estimated here are the leading-order
coefficients of the nested estimator's bias (C terms, scaling like 1/M)
and variance (D terms, scaling like 1/N and 1/(N M)). They are computed
from per-outer-sample summand statistics recorded during an estimator run,
with the plug-in likelihood estimates standing in for the unknown true
values in the denominators.
"""

import math
from dataclasses import dataclass

import numpy as np


class AllZero(ValueError):
    """Weight vector contains no positive entry."""


class TooFewReplicates(ValueError):
    """Replicate statistics need at least two replicates."""


class InsufficientInnerSamples(ValueError):
    """Summand variances require at least two inner samples."""


class InvalidBudget(ValueError):
    """Budget too small to allocate at least one inner and outer sample."""


def cess(weights):
    """Customized effective sample size of normalized weights.

    ``weights`` are the normalized products of inner-estimator summands
    and importance weights (they sum to one); the result lies in [1, M].
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.any(w > 0):
        raise AllZero("no positive weights")
    return 1.0 / float(w @ w)


@dataclass
class ReplicateStats:
    """Moments of a set of replicate estimates against a reference value."""

    count: int
    mean: float
    variance: float
    bias: float
    mse: float
    se_mean: float
    se_bias: float
    se_variance: float
    se_mse: float


def replicate_stats(values, reference):
    """Bias / variance / MSE of replicate estimates versus ``reference``.

    Variance is the unbiased sample variance, bias is mean minus
    reference, and MSE is assembled as bias^2 + variance. Standard errors
    use the usual large-sample formulas (the variance SE assumes
    approximate normality of the replicates).
    """
    values = np.asarray(values, dtype=float)
    r = values.size
    if r < 2:
        raise TooFewReplicates("need at least two replicates")
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    bias = mean - float(reference)
    mse = bias * bias + var
    se_mean = math.sqrt(var / r)
    se_var = var * math.sqrt(2.0 / (r - 1))
    se_mse = math.sqrt((2.0 * bias * se_mean) ** 2 + se_var**2)
    return ReplicateStats(
        count=r,
        mean=mean,
        variance=var,
        bias=bias,
        mse=mse,
        se_mean=se_mean,
        se_bias=se_mean,
        se_variance=se_var,
        se_mse=se_mse,
    )


@dataclass
class DeltaConstants:
    """Empirical leading-order bias and variance coefficients."""

    c1: float
    c2: float
    d1: float
    d2: float
    d3: float

    def predicted_bias(self, m1, m2):
        return self.c1 / m1 - self.c2 / m2

    def predicted_variance(self, n, m1, m2):
        return self.d3 / n + self.d1 / (n * m2) + self.d2 / (n * m1)


def estimate_delta_constants(estimate):
    """Delta-method constants from one estimator run's recorded statistics.

    ``c1``/``c2`` average the relative summand variances of the marginal
    and conditional inner estimators (including the 1/2 factor), ``d1`` and
    ``d2`` average their squares, and ``d3`` is the across-outer-sample
    variance of the log likelihood ratio.
    """
    if estimate.config.M1 < 2 or (estimate.n_eta > 0 and estimate.config.M2 < 2):
        raise InsufficientInnerSamples("summand variances need M >= 2")
    vr_marg = np.asarray(estimate.var_ratio_marg, dtype=float)
    vr_cond = np.asarray(estimate.var_ratio_cond, dtype=float)
    terms = np.asarray(estimate.log_cond, dtype=float) - np.asarray(
        estimate.log_marg, dtype=float
    )
    if terms.size < 2:
        raise InsufficientInnerSamples("d3 needs at least two outer samples")
    return DeltaConstants(
        c1=float(np.mean(vr_marg)) / 2.0,
        c2=float(np.mean(vr_cond)) / 2.0,
        d1=float(np.mean(vr_cond**2)),
        d2=float(np.mean(vr_marg**2)),
        d3=float(np.var(terms, ddof=1)),
    )


@dataclass
class ScalingPlan:
    """Integer sample allocation under a work budget W = 2 M N."""

    budget: float
    alpha_sq: float
    n_outer: int
    m_inner: int

    @property
    def work(self):
        return 2 * self.m_inner * self.n_outer


def _fit_budget(n, m, w, ratio):
    """Adjust integer (n, m) so 2mn <= w < 2(m+1)(n+1), staying close to
    the target m/n ratio."""
    n, m = max(1, int(n)), max(1, int(m))
    w_int = int(w)
    # Clamp straight into budget (rounding can start arbitrarily far out).
    while 2 * m * n > w_int:
        if m > 1 and (n == 1 or m / n > ratio):
            m = max(1, min(m - 1, w_int // (2 * n)))
        elif n > 1:
            n = max(1, min(n - 1, w_int // (2 * m)))
        else:
            raise InvalidBudget(f"budget {w} cannot fit one inner and one outer sample")
    while True:
        can_m = 2 * (m + 1) * n <= w
        can_n = 2 * m * (n + 1) <= w
        if can_m and can_n:
            # grow the side that keeps m/n nearest the target (log scale)
            if abs(math.log((m + 1) / (n * ratio))) <= abs(
                math.log(m / ((n + 1) * ratio))
            ):
                m += 1
            else:
                n += 1
        elif can_m:
            m += 1
        elif can_n:
            n += 1
        else:
            return n, m


def fixed_ratio_plan(ratio, w):
    """Largest allocation with M/N near ``ratio`` fitting in budget ``w``."""
    if not ratio > 0:
        raise InvalidBudget("ratio must be positive")
    if w < 8:
        raise InvalidBudget("budget must be at least 8")
    n = int(round(math.sqrt(w / (2.0 * ratio))))
    m = int(round(ratio * max(1, n)))
    n, m = _fit_budget(n, m, w, ratio)
    return ScalingPlan(budget=float(w), alpha_sq=2.0 * m / n, n_outer=n, m_inner=m)


def optimal_alpha(c_tilde, d3, w):
    """Allocation from the optimal inner/outer scaling rule.

    The optimal ratio parameter is ``alpha* = 2 (c_tilde/d3)^(1/3) /
    w^(1/6)``, which shrinks the inner-to-outer ratio as the budget grows.
    A vanishing ``c_tilde`` (no leading-order bias) degenerates to the
    floor of one inner sample.
    """
    if c_tilde < 0:
        raise InvalidBudget("c_tilde must be nonnegative")
    if not d3 > 0:
        raise InvalidBudget("d3 must be positive")
    if w < 8:
        raise InvalidBudget("budget must be at least 8")
    alpha = 2.0 * (c_tilde / d3) ** (1.0 / 3.0) * w ** (-1.0 / 6.0)
    if alpha == 0.0:
        m = 1
        n = int(w // 2)
        n, m = _fit_budget(n, m, w, 2.0 / w)
        return ScalingPlan(budget=float(w), alpha_sq=2.0 * m / n, n_outer=n, m_inner=m)
    n = int(round(math.sqrt(w) / alpha))
    m = int(round(max(1, n) * alpha**2 / 2.0))
    n, m = _fit_budget(n, m, w, alpha**2 / 2.0)
    return ScalingPlan(budget=float(w), alpha_sq=2.0 * m / n, n_outer=n, m_inner=m)
