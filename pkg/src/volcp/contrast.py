"""Quasi-likelihood increments and the change-point contrast profile."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySegment
from .model import S_batch, VolatilityModel, check_spd, sigma_batch
from .simulate import ObservedSeries


def g_increment(model: VolatilityModel, x_prev, dy, h: float, theta) -> float:
    """log det S(x_prev) + h^-1 S(x_prev)^-1 [dy dy^T] for a single interval."""
    S = S_batch(model, np.asarray(x_prev, dtype=float).reshape(1, -1), theta)[0]
    dy = np.asarray(dy, dtype=float).reshape(-1)
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, dy)
    return float(2.0 * np.sum(np.log(np.diag(L))) + (z @ z) / h)


def g_terms(model: VolatilityModel, series: ObservedSeries, theta,
            i_from: int = 1, i_to: int | None = None) -> np.ndarray:
    """Vector of G_i(theta) for i = i_from..i_to (1-based, inclusive)."""
    if i_to is None:
        i_to = series.n
    theta = model.check_theta(theta)
    x = series.x[i_from - 1:i_to]
    dy = series.y[i_from:i_to + 1] - series.y[i_from - 1:i_to]
    h = series.h
    if model.d == 1:
        sig = sigma_batch(model, x, theta)
        S = np.sum(sig * sig, axis=-1)
        check_spd(S[:, :, None])
        S = S[:, 0]
        return np.log(S) + dy[:, 0] ** 2 / (h * S)
    S = S_batch(model, x, theta, check_box=False)
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, dy[:, :, None])[:, :, 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    return logdet + np.sum(z * z, axis=-1) / h


def compensated_cumsum(values) -> np.ndarray:
    """Left-to-right running sums with Neumaier compensation; out[0] = 0."""
    out = [0.0]
    total = 0.0
    comp = 0.0
    for v in np.asarray(values, dtype=float).tolist():
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out.append(total + comp)
    return np.asarray(out)


@dataclass
class ContrastProfile:
    """Contrast values for every split index k = 0..n.

    ``values[k]`` uses theta0 on intervals 1..k and theta1 on k+1..n.
    """
    values: np.ndarray
    theta0: np.ndarray
    theta1: np.ndarray
    prefix0: np.ndarray
    prefix1: np.ndarray
    T: float
    n: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * (self.T / self.n)

    def to_csv(self, path) -> None:
        lines = ["k,t,phi"]
        t = self.times
        lines += [f"{k},{t[k]:.17g},{v:.17g}" for k, v in enumerate(self.values.tolist())]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def contrast_profile(series: ObservedSeries, model: VolatilityModel, theta0, theta1) -> ContrastProfile:
    g0 = g_terms(model, series, theta0)
    g1 = g_terms(model, series, theta1)
    prefix0 = compensated_cumsum(g0)
    prefix1 = compensated_cumsum(g1)
    # built from the running difference so equal parameters give an exactly flat profile
    values = prefix1[-1] + compensated_cumsum(g0 - g1)
    if not np.all(np.isfinite(values)):
        raise ArithmeticError("contrast profile is not finite")
    return ContrastProfile(values=values, theta0=np.atleast_1d(np.asarray(theta0, dtype=float)),
                           theta1=np.atleast_1d(np.asarray(theta1, dtype=float)),
                           prefix0=prefix0, prefix1=prefix1, T=series.T, n=series.n)


def segment_contrast(series: ObservedSeries, model: VolatilityModel, theta, i_from: int, i_to: int) -> float:
    """Sum of G_i(theta) over intervals i_from..i_to (1-based, inclusive)."""
    if i_from < 1 or i_to > series.n or i_to < i_from:
        raise EmptySegment(f"invalid interval range [{i_from}, {i_to}] for n={series.n}")
    return math.fsum(g_terms(model, series, theta, i_from, i_to).tolist())
