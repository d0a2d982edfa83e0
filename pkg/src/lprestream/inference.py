"""Variance estimation and Wald inference for all four estimators.

The covariance of an estimate is always a sandwich (curvature · score-outer⁻¹
· curvature)⁻¹; for the renewable estimator the two slices are the aggregated
matrices carried in its state, for a single fit they are the pooled summaries
at the estimate, and for CEE/CUEE the recursion in ``estimators`` has already
combined the per-batch sandwiches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import estimators, linalg, model
from .errors import (
    DimensionMismatch,
    InvalidLevel,
    NotPositiveDefinite,
    Singular,
)

_SQRT2 = math.sqrt(2.0)
_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# Coefficients of the rational initial guess for the normal quantile
# (central region and tails handled separately); one Halley refinement against
# the erfc-based CDF then brings the absolute error below 1e-9.
_QUANT_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_QUANT_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_QUANT_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_QUANT_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_QUANT_SPLIT = 0.02425


def normal_cdf(x: float) -> float:
    """Standard normal distribution function, exact to double precision."""
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_quantile(prob: float) -> float:
    """Inverse standard normal CDF; absolute error below 1e-9.

    Rational approximation for the initial guess followed by one Halley step
    against ``normal_cdf``; no lookup tables.
    """
    if not 0.0 < prob < 1.0:
        raise InvalidLevel(f"probability must lie in (0, 1), got {prob}")
    a, b, c, d = _QUANT_A, _QUANT_B, _QUANT_C, _QUANT_D
    if prob < _QUANT_SPLIT:
        q = math.sqrt(-2.0 * math.log(prob))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif prob <= 1.0 - _QUANT_SPLIT:
        q = prob - 0.5
        r = q * q
        x = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
            * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - prob))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    # One Halley step; skipped in the far tails where exp(x²/2) would overflow
    # and the raw approximation is already beyond representable error.
    if abs(x) < 37.0:
        err = normal_cdf(x) - prob
        u = err * _SQRT_TWO_PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def two_sided_p_value(estimate: float, se: float) -> float:
    """Two-sided normal p-value; the zero-se limit collapses to 0/1."""
    if se == 0.0:
        return 1.0 if estimate == 0.0 else 0.0
    return math.erfc(abs(estimate / se) / _SQRT2)


def renewable_variance(state: estimators.RenewableState) -> np.ndarray:
    """Covariance of the renewable estimate from the aggregated sums.

    This is the inverse of q_agg · c_agg⁻¹ · q_agg; the 1/n scaling is already
    carried by the aggregated matrices, so no further division is applied.
    """
    try:
        return linalg.sandwich_inverse(state.q_agg, state.c_agg)
    except NotPositiveDefinite as exc:
        raise Singular("aggregated sandwich is not invertible") from exc


def batch_variance(summ: model.BatchSummaries) -> np.ndarray:
    """Covariance of a single fit from its batch summaries."""
    try:
        return linalg.sandwich_inverse(summ.info, summ.cmat)
    except NotPositiveDefinite as exc:
        raise Singular("batch sandwich is not invertible") from exc


@dataclass(frozen=True)
class EstimateReport:
    """Coefficients with standard errors, Wald intervals and p-values."""

    method: estimators.Method
    beta: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_values: np.ndarray
    cov: np.ndarray
    n_total: int
    batches_seen: int
    level: float
    names: tuple[str, ...]

    @property
    def p(self) -> int:
        return self.beta.shape[0]


def wald_report(
    beta,
    cov,
    level: float = 0.95,
    *,
    method: estimators.Method,
    n_total: int = 0,
    batches_seen: int = 0,
    names: Sequence[str] | None = None,
) -> EstimateReport:
    """Assemble a Wald report from an estimate and its covariance.

    Intervals are beta ± z_{(1+level)/2} · se with the quantile from
    ``normal_quantile``; p-values are two-sided normal. Intervals are closed
    at both endpoints for coverage checks.
    """
    if not isinstance(level, (int, float)) or not 0.0 < float(level) < 1.0:
        raise InvalidLevel(f"level must lie in (0, 1), got {level!r}")
    level = float(level)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1:
        raise DimensionMismatch(f"beta must be 1-d, got {beta.ndim}-d")
    p = beta.shape[0]
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (p, p):
        raise DimensionMismatch(f"cov must have shape ({p},{p}), got {cov.shape}")
    diag = np.diagonal(cov)
    if np.any(diag < 0.0):
        raise ValueError("covariance diagonal has negative entries")
    se = np.sqrt(diag)
    z = normal_quantile(0.5 * (1.0 + level))
    half = z * se
    p_values = np.array([two_sided_p_value(b, s) for b, s in zip(beta, se)])
    if names is None:
        names = tuple(f"b{j + 1}" for j in range(p))
    else:
        names = tuple(str(n) for n in names)
        if len(names) != p:
            raise DimensionMismatch(f"{len(names)} names for {p} coefficients")
    return EstimateReport(
        method=estimators.Method(method),
        beta=beta.copy(),
        se=se,
        ci_low=beta - half,
        ci_high=beta + half,
        p_values=p_values,
        cov=cov.copy(),
        n_total=int(n_total),
        batches_seen=int(batches_seen),
        level=level,
        names=names,
    )


def cp_hit(report: EstimateReport, beta_true) -> np.ndarray:
    """Componentwise coverage indicator; intervals are closed at both ends."""
    target = np.asarray(beta_true, dtype=np.float64)
    if target.shape != report.beta.shape:
        raise DimensionMismatch(
            f"true value has shape {target.shape}, report has {report.beta.shape}"
        )
    return (report.ci_low <= target) & (target <= report.ci_high)


def state_report(
    state: estimators.StreamingState,
    *,
    level: float = 0.95,
    names: Sequence[str] | None = None,
) -> EstimateReport:
    """Wald report for a streaming estimator state.

    The renewable state derives its covariance from the aggregated sandwich;
    CEE and CUEE states carry theirs from the variance recursion.
    """
    method = estimators.method_of_state(state)
    if method is estimators.Method.RENEWABLE:
        cov = renewable_variance(state)
    else:
        cov = state.v
    return wald_report(
        state.beta,
        cov,
        level,
        method=method,
        n_total=state.n_total,
        batches_seen=state.batches_seen,
        names=names,
    )


def pooled_report(
    batches: Iterable[model.Batch],
    beta,
    *,
    level: float = 0.95,
    names: Sequence[str] | None = None,
) -> EstimateReport:
    """Wald report for a full-data fit: plug-in sandwich accumulated at ``beta``."""
    info = None
    cmat = None
    n_total = 0
    count = 0
    for batch in batches:
        summ = model.summarize(batch, beta)
        info = summ.info if info is None else info + summ.info
        cmat = summ.cmat if cmat is None else cmat + summ.cmat
        n_total += summ.n
        count += 1
    if info is None:
        raise ValueError("at least one batch is required")
    try:
        cov = linalg.sandwich_inverse(info, cmat)
    except NotPositiveDefinite as exc:
        raise Singular("pooled sandwich is not invertible") from exc
    return wald_report(
        beta,
        cov,
        level,
        method=estimators.Method.FULL_LPRE,
        n_total=n_total,
        batches_seen=count,
        names=names,
    )


def report_text(report: EstimateReport) -> str:
    """Flat key-value record, one line per coefficient."""
    lines = [
        f"method={report.method.value} n_total={report.n_total} "
        f"batches_seen={report.batches_seen} level={report.level:g}"
    ]
    for j, name in enumerate(report.names):
        lines.append(
            f"name={name} est={report.beta[j]:.10g} sd={report.se[j]:.10g} "
            f"ci_low={report.ci_low[j]:.10g} ci_high={report.ci_high[j]:.10g} "
            f"p_value={report.p_values[j]:.6g}"
        )
    return "\n".join(lines)


def report_csv(report: EstimateReport) -> str:
    """CSV export with the columns est, sd, p-value (one row per coefficient)."""
    lines = ["name,est,sd,p-value"]
    for j, name in enumerate(report.names):
        lines.append(
            f"{name},{report.beta[j]:.17g},{report.se[j]:.17g},{report.p_values[j]:.6g}"
        )
    return "\n".join(lines) + "\n"
