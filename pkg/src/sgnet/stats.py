"""Cohort statistics: t-based confidence intervals, paired t-tests, Bonferroni.

The Student-t CDF is evaluated through the regularised incomplete beta
function, itself computed with a modified-Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_CF_TOL = 1e-15
_CF_MAX_ITER = 10_000
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _split_mass(t: float, df: float) -> tuple[float, float]:
    """``(P(|T| > |t|), P(|T| < |t|))``, each computed without cancellation."""
    t2 = t * t
    if t2 < df:
        inside = betainc(0.5, df / 2.0, t2 / (df + t2))
        return 1.0 - inside, inside
    outside = betainc(df / 2.0, 0.5, df / (df + t2))
    return outside, 1.0 - outside


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    outside, inside = _split_mass(t, df)
    if t > 0:
        return 0.5 + 0.5 * inside if inside < outside else 1.0 - 0.5 * outside
    return 0.5 * outside


def t_sf_two_sided(t: float, df: float) -> float:
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    return _split_mass(t, df)[0] if t != 0.0 else 1.0


def t_quantile(q: float, df: float, tol: float = 1e-12) -> float:
    """Inverse CDF by bisection on ``[-1e3, 1e3]``."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    lo, hi = (0.0, 1e3) if q > 0.5 else (-1e3, 0.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    ci_low: float
    ci_high: float
    n: int


def summarize_moments(mean: float, sd: float, n: int, level: float = 0.95) -> Summary:
    if n < 2:
        raise ValueError("need at least two values")
    half = t_quantile(0.5 + level / 2.0, n - 1) * sd / math.sqrt(n)
    return Summary(mean, sd, mean - half, mean + half, n)


def summarize(values, level: float = 0.95) -> Summary:
    """Mean, sample SD and a t-based confidence interval."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two values")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    if sd == 0.0:
        return Summary(mean, 0.0, mean, mean, int(v.size))
    return summarize_moments(mean, sd, int(v.size), level)


@dataclass(frozen=True)
class TTest:
    t: float
    df: int
    p: float


def paired_t_test(a, b) -> TTest:
    """Two-sided paired t-test on ``a - b``.

    With zero spread in the differences the limit convention applies:
    ``p = 1`` for a zero mean difference, ``p = 0`` otherwise (``t`` is then
    reported as 0 or +/-inf).
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"paired samples differ in length: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = x - y
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTest(0.0, df, 1.0)
        return TTest(math.copysign(math.inf, mean), df, 0.0)
    t = mean / (sd / math.sqrt(n))
    return TTest(t, df, t_sf_two_sided(t, df))


def bonferroni(p: float, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return min(1.0, k * p)
