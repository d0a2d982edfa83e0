"""Multiplicative-regression primitives evaluated on one data batch.

The model is y = exp(xᵀβ) ε with positive response and positive error, fit by
the least product relative error (LPRE) criterion

    loss(β) = Σ_i { y_i exp(-x_iᵀβ) + y_i⁻¹ exp(x_iᵀβ) - 2 },

which is smooth and strictly convex. The gradient (score), Hessian
(information) and per-observation score outer products of this loss are the
only things any estimator in this package ever needs from raw data; they are
all additive over observations, which is what makes one-pass streaming
updates possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NonPositiveResponse, Overflow

# Linear predictors beyond this magnitude would push exp() to the edge of the
# double range; they indicate a diverging iterate and are reported, never
# silently saturated.
MAX_LINEAR_PREDICTOR = 700.0


@dataclass(frozen=True)
class Batch:
    """One arriving block of covariate rows and strictly positive responses.

    Arrays are copied and frozen on construction, so a batch can be shared
    between threads and reused across calls without defensive copies.
    """

    x: np.ndarray
    y: np.ndarray
    index: int = 1

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64, order="C")
        y = np.array(self.y, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch(f"covariate block must be 2-d, got {x.ndim}-d")
        if y.ndim != 1:
            raise DimensionMismatch(f"responses must be 1-d, got {y.ndim}-d")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"{x.shape[0]} covariate rows vs {y.shape[0]} responses"
            )
        if x.shape[0] < 1:
            raise ValueError("a batch needs at least one observation")
        if x.shape[1] < 1:
            raise ValueError("a batch needs at least one covariate column")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates contain non-finite values")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain non-finite values")
        if np.any(y <= 0.0):
            bad = int(np.argmax(y <= 0.0))
            raise NonPositiveResponse(
                f"response at position {bad} is {y[bad]!r}; all responses must be > 0"
            )
        if int(self.index) < 1:
            raise ValueError(f"batch index must be >= 1, got {self.index}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "index", int(self.index))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def _as_coef(beta, p: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (p,):
        raise DimensionMismatch(f"coefficients must have shape ({p},), got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("coefficients contain non-finite values")
    return beta


def _exp_terms(batch: Batch, beta) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation terms y e^{-η} and y⁻¹ e^{η} with η = x·β."""
    beta = _as_coef(beta, batch.p)
    eta = batch.x @ beta
    worst = float(np.max(np.abs(eta)))
    if worst > MAX_LINEAR_PREDICTOR:
        raise Overflow(
            f"|x·beta| reaches {worst:.6g}, beyond the representable guard "
            f"of {MAX_LINEAR_PREDICTOR:g}"
        )
    with np.errstate(over="ignore"):
        decay = batch.y * np.exp(-eta)
        grow = np.exp(eta) / batch.y
    if not (np.all(np.isfinite(decay)) and np.all(np.isfinite(grow))):
        raise Overflow("extreme response magnitudes push exp terms out of range")
    return decay, grow


def lpre_loss(batch: Batch, beta) -> float:
    """Criterion value Σ { y e^{-η} + y⁻¹ e^{η} - 2 }; never negative."""
    decay, grow = _exp_terms(batch, beta)
    total = float(np.sum(decay + grow - 2.0))
    # Each summand is u + 1/u - 2 >= 0; clamp the accumulated rounding noise.
    return max(total, 0.0)


def score(batch: Batch, beta) -> np.ndarray:
    """Gradient of the batch loss: Σ { y⁻¹ e^{η} - y e^{-η} } x."""
    decay, grow = _exp_terms(batch, beta)
    return batch.x.T @ (grow - decay)


def information(batch: Batch, beta) -> np.ndarray:
    """Positive-definite Hessian of the batch loss: Σ { y e^{-η} + y⁻¹ e^{η} } x xᵀ."""
    decay, grow = _exp_terms(batch, beta)
    weights = decay + grow
    return linalg.symmetrize(batch.x.T @ (weights[:, None] * batch.x))


def cmat(batch: Batch, beta) -> np.ndarray:
    """Sum of squared-residual outer products: Σ { y⁻¹ e^{η} - y e^{-η} }² x xᵀ."""
    decay, grow = _exp_terms(batch, beta)
    resid = grow - decay
    return linalg.symmetrize(batch.x.T @ ((resid * resid)[:, None] * batch.x))


@dataclass(frozen=True)
class BatchSummaries:
    """Score, curvature and score-outer-product sums at a fixed coefficient."""

    score: np.ndarray
    info: np.ndarray
    cmat: np.ndarray
    n: int
    at_beta: np.ndarray


def summarize(batch: Batch, beta) -> BatchSummaries:
    """All batch summaries in a single pass (the exponentials are shared)."""
    beta = _as_coef(beta, batch.p)
    decay, grow = _exp_terms(batch, beta)
    resid = grow - decay
    weights = decay + grow
    return BatchSummaries(
        score=batch.x.T @ resid,
        info=linalg.symmetrize(batch.x.T @ (weights[:, None] * batch.x)),
        cmat=linalg.symmetrize(batch.x.T @ ((resid * resid)[:, None] * batch.x)),
        n=batch.n,
        at_beta=beta.copy(),
    )
