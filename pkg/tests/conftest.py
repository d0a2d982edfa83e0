"""Shared helpers: random batch construction and finite-difference oracles."""

import numpy as np
import pytest

from lprestream.model import Batch


def random_batch(rng, n=None, p=None, log_y_spread=2.0):
    """Batch with standard-normal covariates and log-uniform positive responses."""
    n = n if n is not None else int(rng.integers(2, 21))
    p = p if p is not None else int(rng.integers(1, 6))
    x = rng.standard_normal((n, p))
    y = np.exp(rng.uniform(-log_y_spread, log_y_spread, size=n))
    return Batch(x=x, y=y, index=1)


def random_coef(rng, p, scale=1.0):
    return rng.uniform(-scale, scale, size=p)


def fd_gradient(fun, beta, h=1e-6):
    """Central finite differences of a scalar function of beta."""
    beta = np.asarray(beta, dtype=float)
    out = np.zeros_like(beta)
    for j in range(beta.size):
        step = np.zeros_like(beta)
        step[j] = h
        out[j] = (fun(beta + step) - fun(beta - step)) / (2.0 * h)
    return out


def fd_jacobian(fun, beta, h=1e-6):
    """Central finite differences of a vector function of beta, column by column."""
    beta = np.asarray(beta, dtype=float)
    cols = []
    for j in range(beta.size):
        step = np.zeros_like(beta)
        step[j] = h
        cols.append((fun(beta + step) - fun(beta - step)) / (2.0 * h))
    return np.column_stack(cols)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
