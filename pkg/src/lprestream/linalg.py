"""Dense linear algebra for small symmetric positive-definite systems.

Everything in this module targets coefficient-space dimensions (a handful up
to a few tens), so matrices are stored dense, the factorization is unblocked,
and symmetry is enforced structurally by mirroring the upper triangle instead
of hoping arithmetic preserves it.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

# A pivot at or below dim * 2^-52 * max(diag) counts as loss of positive
# definiteness (scale-aware analogue of the usual SPD failure test).
_PIVOT_REL_TOL = 2.0**-52


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def _as_vector(b, dim: int, name: str = "vector") -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (dim,):
        raise DimensionMismatch(f"{name} must have shape ({dim},), got {b.shape}")
    return b


def symmetrize(a) -> np.ndarray:
    """Mirror the upper triangle onto the lower one (exact bitwise symmetry)."""
    a = _as_square(a)
    return np.triu(a) + np.triu(a, 1).T


class SpdFactor:
    """Lower Cholesky factor supporting repeated solves against one factorization."""

    __slots__ = ("lower",)

    def __init__(self, lower: np.ndarray):
        self.lower = lower

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, rhs) -> np.ndarray:
        """Solve A x = rhs for a vector or matrix right-hand side."""
        lower = self.lower
        p = lower.shape[0]
        out = np.array(rhs, dtype=np.float64)
        if out.shape[:1] != (p,):
            raise DimensionMismatch(
                f"right-hand side must have leading dimension {p}, got shape {out.shape}"
            )
        for i in range(p):
            out[i] = (out[i] - lower[i, :i] @ out[:i]) / lower[i, i]
        for i in range(p - 1, -1, -1):
            out[i] = (out[i] - lower[i + 1 :, i] @ out[i + 1 :]) / lower[i, i]
        return out


def cholesky_spd(a) -> SpdFactor:
    """Factor a symmetric positive-definite matrix as L Lᵀ.

    Raises NotPositiveDefinite as soon as a pivot falls at or below
    dim * 2^-52 * max(diag), which signals a degenerate information matrix.
    """
    a = _as_square(a)
    p = a.shape[0]
    if p == 0:
        return SpdFactor(np.zeros((0, 0)))
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    limit = p * _PIVOT_REL_TOL * float(np.max(np.diagonal(a)))
    lower = np.zeros_like(a)
    for j in range(p):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= limit:
            raise NotPositiveDefinite(
                f"pivot {pivot:.6e} at column {j} is at or below tolerance {limit:.6e}"
            )
        lower[j, j] = np.sqrt(pivot)
        if j + 1 < p:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return SpdFactor(lower)


def solve_spd(a, b) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A."""
    a = _as_square(a)
    b = _as_vector(b, a.shape[0], "right-hand side")
    return cholesky_spd(a).solve(b)


def invert_spd(a) -> np.ndarray:
    """Symmetric inverse of a symmetric positive-definite matrix."""
    a = _as_square(a)
    inv = cholesky_spd(a).solve(np.eye(a.shape[0]))
    return symmetrize(inv)


def sym_outer_accumulate(acc, x, w) -> np.ndarray:
    """Return acc + w * x xᵀ, exactly symmetric by construction."""
    acc = _as_square(acc, "accumulator")
    x = _as_vector(x, acc.shape[0], "update vector")
    w = float(w)
    if not np.isfinite(w):
        raise ValueError(f"weight must be finite, got {w}")
    return symmetrize(acc + w * np.outer(x, x))


def sandwich_inverse(outer, inner) -> np.ndarray:
    """Invert the sandwich outer · inner⁻¹ · outerᵀ (both symmetric, inner PD)."""
    outer = _as_square(outer, "outer matrix")
    inner = _as_square(inner, "inner matrix")
    if outer.shape != inner.shape:
        raise DimensionMismatch(
            f"outer {outer.shape} and inner {inner.shape} dimensions differ"
        )
    half = cholesky_spd(inner).solve(outer)
    bread = symmetrize(outer.T @ half)
    return invert_spd(bread)
