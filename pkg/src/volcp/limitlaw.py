"""Limit laws of the change-point estimator.

``density_f`` / ``cdf_F`` are the closed forms of the law of
argmax_v {W(v) - |v|/2} for a two-sided standard Wiener process W.  The
samplers draw the argmin of the limit random fields for the shrinking
(``caseB``) and fixed (``caseA``) parameter-separation regimes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import erfc, erfcx

from .errors import DegenerateChange, TruncationTooSmall, UnknownTruth
from .model import VolatilityModel, eval_S, eval_Xi, sigma_batch
from .simulate import ObservedSeries, _floor_index, stream

SQRT2 = math.sqrt(2.0)
GAMMA_CONVENTIONS = ("theorem", "paper")


@dataclass
class LimitSample:
    values: np.ndarray
    gamma: Optional[float]
    meta: dict = field(default_factory=dict)


def _upper_tail_times_exp(a, c):
    # exp(a) * (1 - Phi(c sqrt(a))) without overflow, for c > sqrt(2)
    z = c * np.sqrt(a)
    return 0.5 * erfcx(z / SQRT2) * np.exp(a - 0.5 * z * z)


def density_f(x):
    a = np.abs(np.asarray(x, dtype=float))
    out = 1.5 * _upper_tail_times_exp(a, 1.5) - 0.25 * erfc(0.5 * np.sqrt(a) / SQRT2)
    return out if out.ndim else float(out)


def _g(a):
    s = np.sqrt(a)
    return (1.0 + np.sqrt(a / (2.0 * np.pi)) * np.exp(-a / 8.0)
            - 0.25 * (a + 5.0) * erfc(0.5 * s / SQRT2)
            + 1.5 * _upper_tail_times_exp(a, 1.5))


def cdf_F(x):
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    g = _g(a)
    out = np.where(x > 0, g, 1.0 - g)
    return out if out.ndim else float(out)


def reference_table(xmin: float, xmax: float, step: float) -> np.ndarray:
    """Rows (x, f(x), F(x)) on an inclusive equally spaced grid."""
    if step <= 0 or xmax < xmin:
        raise ValueError("need step > 0 and xmax >= xmin")
    count = int(math.floor((xmax - xmin) / step + 1e-9)) + 1
    k0 = xmin / step
    if abs(k0 - round(k0)) < 1e-9:
        # integer multiples of the step keep the grid exactly symmetric about 0
        x = (round(k0) + np.arange(count)) * step
    else:
        x = xmin + step * np.arange(count)
    return np.column_stack([x, density_f(x), cdf_F(x)])


def ks_distance(values) -> float:
    """One-sample Kolmogorov-Smirnov distance between the draws and F."""
    return float(stats.kstest(np.asarray(values, dtype=float), cdf_F).statistic)


def sample_caseB(gamma: float, grid_step: float = 0.005, L: Optional[float] = None,
                 count: int = 1000, seed: int = 0, chunk: int = 100) -> LimitSample:
    """Argmax locations of sqrt(gamma) W(v) - gamma |v| / 2 on a grid over [-L, L].

    gamma times a draw follows ``cdf_F``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if L is None:
        L = 50.0 / gamma
    steps = int(math.ceil(L / grid_step))
    scale = math.sqrt(gamma * grid_step)
    drift = 0.5 * gamma * grid_step
    values = np.empty(count)
    hits = 0
    for c, start in enumerate(range(0, count, chunk)):
        b = min(chunk, count - start)
        rng = stream(seed, c)
        best = np.zeros(b)
        idx = np.zeros(b, dtype=int)
        for sign in (1, -1):
            walk = np.cumsum(rng.standard_normal((b, steps)) * scale - drift, axis=1)
            j = np.argmax(walk, axis=1)
            m = walk[np.arange(b), j]
            better = m > best
            best = np.where(better, m, best)
            idx = np.where(better, sign * (j + 1), idx)
        hits += int(np.sum(np.abs(idx) == steps))
        values[start:start + b] = idx * grid_step
    if hits > 1e-3 * count:
        raise TruncationTooSmall(f"{hits} of {count} draws reached the truncation |v| = {L}")
    return LimitSample(values, float(gamma), {"grid_step": grid_step, "L": L, "boundary_hits": hits})


def _caseA_coefficients(model, x_star, theta0, theta1):
    S0 = eval_S(model, x_star, theta0)
    S1 = eval_S(model, x_star, theta1)
    if np.allclose(S0, S1, rtol=1e-12, atol=0.0):
        raise DegenerateChange("S is identical under both parameters at x*")
    s0 = sigma_batch(model, np.reshape(x_star, (1, -1)), theta0)[0]
    s1 = sigma_batch(model, np.reshape(x_star, (1, -1)), theta1)[0]
    S0i, S1i = np.linalg.inv(S0), np.linalg.inv(S1)
    logdet = float(np.linalg.slogdet(S1)[1] - np.linalg.slogdet(S0)[1])
    # after the change (v > 0): theta0 applied to theta1 increments; before it, the reverse
    A_right = s1.T @ (S0i - S1i) @ s1
    A_left = s0.T @ (S1i - S0i) @ s0
    return (A_right, logdet), (A_left, -logdet)


def caseA_field(model: VolatilityModel, x_star, theta0_star, theta1_star, L0: int,
                count: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of the fixed-separation limit field at v = -L0..L0, shape ``(count, 2 L0 + 1)``."""
    (Ar, cr), (Al, cl) = _caseA_coefficients(model, x_star, theta0_star, theta1_star)
    r = model.r
    out = np.zeros((count, 2 * L0 + 1))
    for side, (A, c) in ((1, (Ar, cr)), (-1, (Al, cl))):
        zeta = rng.standard_normal((count, L0, r))
        incr = np.einsum("bia,ac,bic->bi", zeta, A, zeta) - c
        path = np.cumsum(incr, axis=1)
        if side > 0:
            out[:, L0 + 1:] = path
        else:
            out[:, :L0] = path[:, ::-1]
    return out


def sample_caseA(model: VolatilityModel, x_star, theta0_star, theta1_star, L0: int = 200,
                 count: int = 1000, seed: int = 0, chunk: int = 1000) -> LimitSample:
    """Integer argmin (smallest index on ties) of the fixed-separation limit field."""
    values = np.empty(count, dtype=int)
    for c, start in enumerate(range(0, count, chunk)):
        b = min(chunk, count - start)
        field_ = caseA_field(model, x_star, theta0_star, theta1_star, L0, b, stream(seed, c))
        values[start:start + b] = np.argmin(field_, axis=1) - L0
    return LimitSample(values, None, {"L0": L0, "boundary_hits": int(np.sum(np.abs(values) == L0))})


def x_at(series: ObservedSeries, t: float) -> np.ndarray:
    return series.x[min(series.n, _floor_index(series.n * t / series.T))]


def gamma_hat(model: VolatilityModel, x_star, theta, eta, T: float, convention: str = "theorem") -> float:
    """Normaliser of the studentised change-point error.

    ``theorem``: (2T)^-1 Xi(x*, theta)[eta, eta];
    ``paper``: (log(1 + x*^2))^2, defined for model1 only.
    """
    if convention == "theorem":
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return float(eta @ eval_Xi(model, x_star, theta) @ eta) / (2.0 * T)
    if convention == "paper":
        if model.name != "model1":
            raise ValueError("the 'paper' normaliser is only defined for model1")
        return float(np.log1p(np.asarray(x_star, dtype=float).reshape(-1)[0] ** 2) ** 2)
    raise ValueError(f"unknown gamma convention {convention!r}; use one of {GAMMA_CONVENTIONS}")


def studentize(fit, series: ObservedSeries, model: VolatilityModel, t_star_true: Optional[float],
               vartheta: Optional[float], gamma_convention: str = "theorem") -> float:
    """Z = n vartheta^2 (t_check - t*) * Gamma_hat(X_{t*})."""
    if t_star_true is None or vartheta is None:
        raise UnknownTruth("studentizing needs the true change point and separation")
    th0 = np.asarray(fit.theta_check0, dtype=float)
    diff = np.asarray(fit.theta_check1, dtype=float) - th0
    norm = np.linalg.norm(diff)
    eta = diff / norm if norm > 0 else np.ones_like(diff) / math.sqrt(diff.size)
    th0 = np.clip(th0, *model.box)
    g = gamma_hat(model, x_at(series, t_star_true), th0, eta, series.T, gamma_convention)
    return series.n * vartheta ** 2 * (fit.t_check - t_star_true) * g
