"""Small models with closed-form answers, shared by the test modules.

The coefficient functions live at module level so the models pickle into
worker processes.
"""
import math

import numpy as np

from volcp.model import VolatilityModel
from volcp.simulate import ObservedSeries


def _flat_sigma(x, theta):
    # S = theta, independent of the state
    return np.full((x.shape[0], 1, 1), math.sqrt(theta[0]))


def _diag2_sigma(x, theta):
    out = np.zeros((x.shape[0], 2, 2))
    out[:, 0, 0] = math.sqrt(theta[0])
    out[:, 1, 1] = math.sqrt(theta[1])
    return out


def _mixed2_sigma(x, theta):
    # state-dependent, non-diagonal, no analytic derivative
    out = np.zeros((x.shape[0], 2, 2))
    out[:, 0, 0] = np.exp(theta[0] * np.tanh(x[:, 0]))
    out[:, 1, 0] = theta[1] * np.sin(x[:, 1])
    out[:, 1, 1] = 1.0 + theta[0] * theta[1] + 0.1 * x[:, 0] ** 2
    return out


def _zero_sigma(x, theta):
    return np.zeros((x.shape[0], 1, 1))


def _const_sigma(x, theta):
    return np.full((x.shape[0], 1, 1), theta[0])


def _above_minus_two(x):
    return np.all(x > -2.0, axis=-1)


def flat_model(lo=0.05, hi=5.0):
    return VolatilityModel("flat", 1, 1, 1, (lo,), (hi,), _flat_sigma)


def diag2_model(lo=0.05, hi=5.0):
    return VolatilityModel("diag2", 2, 2, 2, (lo, lo), (hi, hi), _diag2_sigma)


def mixed2_model():
    return VolatilityModel("mixed2", 2, 2, 2, (-1.0, -1.0), (1.0, 1.0), _mixed2_sigma)


def zero_model():
    return VolatilityModel("zero", 1, 1, 1, (0.0,), (1.0,), _zero_sigma)


def const_model(lo=0.0, hi=5.0):
    return VolatilityModel("const", 1, 1, 1, (lo,), (hi,), _const_sigma)


def fragile_model():
    """Unit Brownian motion that counts as failed once it drops to -2."""
    return VolatilityModel("fragile", 1, 1, 1, (0.05,), (5.0,), _const_sigma,
                           in_domain=_above_minus_two)


def gaussian_series(S_values, n, seed, T=1.0, change_at=None):
    """Series with independent N(0, S h) increments; S switches at ``change_at``.

    ``S_values`` is (S_before,) or (S_before, S_after); each S is a scalar or
    a vector of per-coordinate variances.
    """
    rng = np.random.default_rng(seed)
    h = T / n
    before = np.atleast_1d(np.asarray(S_values[0], dtype=float))
    after = np.atleast_1d(np.asarray(S_values[-1], dtype=float))
    k = n if change_at is None else int(math.floor(n * change_at / T))
    var = np.vstack([np.tile(before, (k, 1)), np.tile(after, (n - k, 1))])
    dy = rng.standard_normal(var.shape) * np.sqrt(var * h)
    y = np.vstack([np.zeros((1, var.shape[1])), np.cumsum(dy, axis=0)])
    return ObservedSeries.from_arrays(y, T=T)
