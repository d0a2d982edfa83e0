"""The four estimation procedures.

* ``fit_full``      -- Newton-Raphson on the pooled criterion (the reference
                       full-data estimator).
* ``renew_update``  -- one-pass renewable update: the previous estimate plus
                       O(p²) summary matrices absorb a new batch, raw data is
                       never revisited.
* ``cee_update``    -- cumulative estimating equation baseline: a
                       matrix-weighted average of per-batch fits.
* ``cuee_update``   -- cumulatively updated estimating equation baseline:
                       a bias-reduced refinement of CEE built from running
                       score sums at intermediary CEE estimates.

All updates are pure: they return a new state and leave the previous one
untouched, so any state can be checkpointed, compared or replayed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from . import linalg, model
from .errors import (
    DimensionMismatch,
    NotConverged,
    NotPositiveDefinite,
    Overflow,
    Singular,
)


class Method(str, Enum):
    """Estimation procedures exposed by this package."""

    FULL_LPRE = "full"
    RENEWABLE = "renew"
    CEE = "cee"
    CUEE = "cuee"


#: Methods that keep a running state and can be advanced batch by batch.
STREAMING_METHODS = (Method.RENEWABLE, Method.CEE, Method.CUEE)


@dataclass(frozen=True)
class SolverConfig:
    """Newton iteration controls.

    ``tol`` bounds the sup-norm of the accepted increment, ``max_iter`` the
    number of outer iterations, and ``max_step_halvings`` the damping budget
    per iteration. ``refresh_hessian`` re-evaluates the per-batch curvature at
    every inner iterate of the renewable update instead of freezing it at the
    previous estimate (slower, occasionally sharper; off by default).
    """

    tol: float = 1e-10
    max_iter: int = 100
    max_step_halvings: int = 30
    refresh_hessian: bool = False

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.max_step_halvings < 0:
            raise ValueError(
                f"max_step_halvings must be >= 0, got {self.max_step_halvings}"
            )


DEFAULT_SOLVER = SolverConfig()


def _sup(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _frozen_vector(value, p: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.shape != (p,):
        raise DimensionMismatch(f"{name} must have shape ({p},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _frozen_square(value, p: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.shape != (p, p):
        raise DimensionMismatch(f"{name} must have shape ({p},{p}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _newton_root(
    start: np.ndarray,
    residual: Callable[[np.ndarray], np.ndarray],
    factor_for: Callable[[np.ndarray], linalg.SpdFactor],
    cfg: SolverConfig,
) -> np.ndarray:
    """Damped Newton iteration for residual(β) = 0 with an SPD step matrix.

    ``factor_for`` supplies the factored step matrix for the current iterate;
    a frozen scheme may return the same factor every time. Steps that overflow
    or fail to reduce the residual sup-norm are halved; if no halving improves
    the residual, the smallest finite step is accepted so that stagnation at a
    floating-point stationary point terminates through the increment test.
    """
    beta = np.array(start, dtype=np.float64)
    resid = residual(beta)
    resid_norm = _sup(resid)
    for _ in range(cfg.max_iter):
        delta = factor_for(beta).solve(resid)
        if _sup(delta) <= cfg.tol:
            return beta - delta
        step = 1.0
        applied = None  # (candidate, residual, step actually taken)
        for _ in range(cfg.max_step_halvings + 1):
            candidate = beta - step * delta
            try:
                cand_resid = residual(candidate)
            except Overflow:
                step *= 0.5
                continue
            applied = (candidate, cand_resid, step)
            if _sup(cand_resid) <= resid_norm:
                break
            step *= 0.5
        if applied is None:
            raise Overflow(
                "every damped Newton step overflowed; the update diverged"
            )
        beta, resid, used = applied
        resid_norm = _sup(resid)
        if used * _sup(delta) <= cfg.tol:
            return beta
    raise NotConverged(
        f"no convergence within {cfg.max_iter} iterations "
        f"(residual sup-norm {resid_norm:.3e})"
    )


def _pool(batches: Iterable[model.Batch]) -> model.Batch:
    batches = list(batches)
    if not batches:
        raise ValueError("at least one batch is required")
    if len(batches) == 1:
        return batches[0]
    p = batches[0].p
    for b in batches[1:]:
        if b.p != p:
            raise DimensionMismatch(
                f"batch {b.index} has width {b.p}, expected {p}"
            )
    return model.Batch(
        x=np.vstack([b.x for b in batches]),
        y=np.concatenate([b.y for b in batches]),
        index=batches[0].index,
    )


def fit_full(batches: Iterable[model.Batch], cfg: SolverConfig = DEFAULT_SOLVER) -> np.ndarray:
    """Minimize the pooled criterion by Newton-Raphson from the zero vector.

    Returns the coefficient vector; the pooled score at the result satisfies
    sup-norm <= 1e-6 * (1 + n_total).
    """
    pooled = _pool(batches)

    def resid(beta):
        return model.score(pooled, beta)

    def factor_for(beta):
        return linalg.cholesky_spd(model.information(pooled, beta))

    try:
        beta = _newton_root(np.zeros(pooled.p), resid, factor_for, cfg)
    except NotPositiveDefinite as exc:
        raise Singular("pooled information matrix is not positive definite") from exc
    closing = _sup(model.score(pooled, beta))
    bound = 1e-6 * (1.0 + pooled.n)
    if closing > bound:
        raise NotConverged(
            f"score sup-norm {closing:.3e} exceeds {bound:.3e} at the returned estimate"
        )
    return beta


# ---------------------------------------------------------------------------
# Renewable estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenewableState:
    """Everything the renewable estimator retains between batches.

    ``q_agg`` and ``c_agg`` accumulate each batch's curvature and score outer
    products evaluated at that batch's own update; together with ``beta`` they
    are sufficient for both the next update and the variance estimate, so the
    state stays O(p²) no matter how many observations have streamed past.
    """

    beta: np.ndarray
    q_agg: np.ndarray
    c_agg: np.ndarray
    n_total: int = 0
    batches_seen: int = 0

    def __post_init__(self):
        p = np.asarray(self.beta).shape[0]
        object.__setattr__(self, "beta", _frozen_vector(self.beta, p, "beta"))
        object.__setattr__(self, "q_agg", _frozen_square(self.q_agg, p, "q_agg"))
        object.__setattr__(self, "c_agg", _frozen_square(self.c_agg, p, "c_agg"))
        if self.n_total < 0 or self.batches_seen < 0:
            raise ValueError("counters must be non-negative")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def initial(cls, p: int) -> "RenewableState":
        return cls(beta=np.zeros(p), q_agg=np.zeros((p, p)), c_agg=np.zeros((p, p)))


def renew_update(
    state: RenewableState, batch: model.Batch, cfg: SolverConfig = DEFAULT_SOLVER
) -> RenewableState:
    """Absorb one batch into the renewable state; the raw batch is not retained.

    The new estimate solves the incremental estimating equation

        q_agg · (β - β_prev) + score_b(β) = 0,

    found by damped Newton steps with the step matrix
    q_agg + information_b(β_prev) factored once and reused (the per-batch
    curvature is frozen at the previous estimate unless
    ``cfg.refresh_hessian`` is set). Afterwards the batch's curvature and
    score outer products, both evaluated at the new estimate, are folded into
    the running sums.
    """
    if batch.p != state.p:
        raise DimensionMismatch(
            f"batch width {batch.p} does not match state width {state.p}"
        )
    anchor = state.beta
    q_prev = state.q_agg

    def resid(beta):
        return q_prev @ (beta - anchor) + model.score(batch, beta)

    try:
        if cfg.refresh_hessian:
            def factor_for(beta):
                return linalg.cholesky_spd(q_prev + model.information(batch, beta))
        else:
            frozen = linalg.cholesky_spd(q_prev + model.information(batch, anchor))

            def factor_for(beta):
                return frozen

        beta_new = _newton_root(anchor, resid, factor_for, cfg)
        q_new = q_prev + model.information(batch, beta_new)
        c_new = state.c_agg + model.cmat(batch, beta_new)
    except NotPositiveDefinite as exc:
        raise Singular(
            "step matrix (aggregated + batch curvature) is not positive definite"
        ) from exc
    return RenewableState(
        beta=beta_new,
        q_agg=q_new,
        c_agg=c_new,
        n_total=state.n_total + batch.n,
        batches_seen=state.batches_seen + 1,
    )


# ---------------------------------------------------------------------------
# CEE / CUEE sequential baselines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CeeState:
    """Running state of the cumulative estimating equation baseline."""

    beta: np.ndarray
    q_agg: np.ndarray
    v: np.ndarray
    n_total: int = 0
    batches_seen: int = 0

    def __post_init__(self):
        p = np.asarray(self.beta).shape[0]
        object.__setattr__(self, "beta", _frozen_vector(self.beta, p, "beta"))
        object.__setattr__(self, "q_agg", _frozen_square(self.q_agg, p, "q_agg"))
        object.__setattr__(self, "v", _frozen_square(self.v, p, "v"))
        if self.n_total < 0 or self.batches_seen < 0:
            raise ValueError("counters must be non-negative")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def initial(cls, p: int) -> "CeeState":
        return cls(beta=np.zeros(p), q_agg=np.zeros((p, p)), v=np.zeros((p, p)))


def _combine_variances(q_prev, v_prev, q_batch, v_batch, denom_inv):
    middle = q_prev @ v_prev @ q_prev + q_batch @ v_batch @ q_batch
    return linalg.symmetrize(denom_inv @ middle @ denom_inv)


def cee_update(
    state: CeeState, batch: model.Batch, cfg: SolverConfig = DEFAULT_SOLVER
) -> CeeState:
    """Fold one batch into the CEE state via its own stand-alone fit.

    Every batch must be fittable in isolation (design spanning, enough rows),
    which is exactly the restriction the renewable update does not have; a
    batch that cannot support its own fit raises Singular.
    """
    if batch.p != state.p:
        raise DimensionMismatch(
            f"batch width {batch.p} does not match state width {state.p}"
        )
    try:
        beta_hat = fit_full([batch], cfg)
        summ = model.summarize(batch, beta_hat)
        q_batch = summ.info
        denom_factor = linalg.cholesky_spd(state.q_agg + q_batch)
        beta_new = denom_factor.solve(state.q_agg @ state.beta + q_batch @ beta_hat)
        v_batch = linalg.sandwich_inverse(q_batch, summ.cmat)
        denom_inv = linalg.symmetrize(denom_factor.solve(np.eye(state.p)))
        v_new = _combine_variances(state.q_agg, state.v, q_batch, v_batch, denom_inv)
    except NotPositiveDefinite as exc:
        raise Singular(
            f"batch {batch.index} cannot support a stand-alone fit "
            f"(n={batch.n}, p={batch.p})"
        ) from exc
    return CeeState(
        beta=beta_new,
        q_agg=state.q_agg + q_batch,
        v=v_new,
        n_total=state.n_total + batch.n,
        batches_seen=state.batches_seen + 1,
    )


@dataclass(frozen=True)
class CueeState:
    """Running state of the cumulatively updated estimating equation baseline.

    ``qb_sum`` and ``s_sum`` are the running vectors Σ Q_k β̌_k and
    Σ score_k(β̌_k) over the intermediary estimates β̌_k; they are extended
    per batch and never re-derived from raw data. The intermediary sequence
    itself is the embedded CEE state advanced in lockstep.
    """

    beta: np.ndarray
    q_agg: np.ndarray
    qb_sum: np.ndarray
    s_sum: np.ndarray
    v: np.ndarray
    cee_companion: CeeState
    n_total: int = 0
    batches_seen: int = 0

    def __post_init__(self):
        p = np.asarray(self.beta).shape[0]
        object.__setattr__(self, "beta", _frozen_vector(self.beta, p, "beta"))
        object.__setattr__(self, "q_agg", _frozen_square(self.q_agg, p, "q_agg"))
        object.__setattr__(self, "qb_sum", _frozen_vector(self.qb_sum, p, "qb_sum"))
        object.__setattr__(self, "s_sum", _frozen_vector(self.s_sum, p, "s_sum"))
        object.__setattr__(self, "v", _frozen_square(self.v, p, "v"))
        if not isinstance(self.cee_companion, CeeState):
            raise TypeError("cee_companion must be a CeeState")
        if self.cee_companion.p != p:
            raise DimensionMismatch("companion width differs from state width")
        if self.n_total < 0 or self.batches_seen < 0:
            raise ValueError("counters must be non-negative")

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def initial(cls, p: int) -> "CueeState":
        return cls(
            beta=np.zeros(p),
            q_agg=np.zeros((p, p)),
            qb_sum=np.zeros(p),
            s_sum=np.zeros(p),
            v=np.zeros((p, p)),
            cee_companion=CeeState.initial(p),
        )


def cuee_update(
    state: CueeState, batch: model.Batch, cfg: SolverConfig = DEFAULT_SOLVER
) -> CueeState:
    """Fold one batch into the CUEE state.

    The intermediary estimate β̌_b is the embedded CEE state advanced on the
    same batch; curvature, score and score outer products are evaluated there,
    and the new estimate solves

        (q_agg + Q_b) β = qb_sum + Q_b β̌_b - s_sum - score_b(β̌_b).
    """
    if batch.p != state.p:
        raise DimensionMismatch(
            f"batch width {batch.p} does not match state width {state.p}"
        )
    companion = cee_update(state.cee_companion, batch, cfg)
    check_beta = companion.beta
    summ = model.summarize(batch, check_beta)
    q_batch = summ.info
    try:
        denom_factor = linalg.cholesky_spd(state.q_agg + q_batch)
        rhs = state.qb_sum + q_batch @ check_beta - state.s_sum - summ.score
        beta_new = denom_factor.solve(rhs)
        v_batch = linalg.sandwich_inverse(q_batch, summ.cmat)
        denom_inv = linalg.symmetrize(denom_factor.solve(np.eye(state.p)))
        v_new = _combine_variances(state.q_agg, state.v, q_batch, v_batch, denom_inv)
    except NotPositiveDefinite as exc:
        raise Singular(
            f"batch {batch.index} yields a degenerate system at the intermediary "
            f"estimate (n={batch.n}, p={batch.p})"
        ) from exc
    return CueeState(
        beta=beta_new,
        q_agg=state.q_agg + q_batch,
        qb_sum=state.qb_sum + q_batch @ check_beta,
        s_sum=state.s_sum + summ.score,
        v=v_new,
        cee_companion=companion,
        n_total=state.n_total + batch.n,
        batches_seen=state.batches_seen + 1,
    )


# ---------------------------------------------------------------------------
# Method dispatch helpers
# ---------------------------------------------------------------------------

StreamingState = RenewableState | CeeState | CueeState

_INITIAL = {
    Method.RENEWABLE: RenewableState.initial,
    Method.CEE: CeeState.initial,
    Method.CUEE: CueeState.initial,
}

_UPDATE = {
    RenewableState: renew_update,
    CeeState: cee_update,
    CueeState: cuee_update,
}


def initial_state(method: Method, p: int) -> StreamingState:
    """Zero-initialized state for a streaming method."""
    method = Method(method)
    if method not in _INITIAL:
        raise ValueError(f"{method.value!r} is not a streaming method")
    return _INITIAL[method](p)


def update_state(
    state: StreamingState, batch: model.Batch, cfg: SolverConfig = DEFAULT_SOLVER
) -> StreamingState:
    """Advance any streaming state by one batch (dispatch on the state type)."""
    update = _UPDATE.get(type(state))
    if update is None:
        raise TypeError(f"unknown state type {type(state).__name__}")
    return update(state, batch, cfg)


def method_of_state(state: StreamingState) -> Method:
    """The method a streaming state belongs to."""
    if isinstance(state, RenewableState):
        return Method.RENEWABLE
    if isinstance(state, CueeState):
        return Method.CUEE
    if isinstance(state, CeeState):
        return Method.CEE
    raise TypeError(f"unknown state type {type(state).__name__}")
