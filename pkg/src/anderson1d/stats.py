"""Order-fixed reductions used everywhere results are averaged."""

import math
from dataclasses import dataclass

import numpy as np


def fmean(values):
    values = np.asarray(values, dtype=float).ravel()
    return math.fsum(values) / values.size


def mean_and_stderr(values):
    """Mean and standard error with exactly rounded sums (order independent)."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def linear_fit(x, y):
    """Ordinary least squares y = intercept + slope * x.

    Returns (slope, intercept, r_squared, slope_stderr).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two points")
    xm = math.fsum(x) / n
    ym = math.fsum(y) / n
    sxx = math.fsum((x - xm) ** 2)
    if sxx == 0.0:
        raise ValueError("x values are all equal")
    sxy = math.fsum((x - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = math.fsum(resid**2)
    ss_tot = math.fsum((y - ym) ** 2)
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    return slope, intercept, r2, se


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(value) against distance; slope > 0 means decay."""

    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    fit_window: tuple
    point_stderr: tuple = ()


def decay_fit(xs, values, stderrs=None):
    """Fit ``log(values) = intercept - slope * xs``.

    ``stderrs`` (standard errors of ``values``) are carried into the result
    on the log scale; the fit itself is unweighted.
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.size < 4:
        raise ValueError("decay_fit needs at least 4 points")
    if np.any(~(values > 0)):
        raise ValueError("decay_fit needs strictly positive values")
    slope, intercept, r2, se = linear_fit(xs, np.log(values))
    point_se = ()
    if stderrs is not None:
        point_se = tuple(float(s) for s in np.asarray(stderrs, dtype=float) / values)
    return DecayFit(-slope, intercept, r2, se, (float(xs.min()), float(xs.max())), point_se)
