"""Change-point argmin and the two-stage estimation pipeline."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .contrast import ContrastProfile, contrast_profile, segment_contrast
from .errors import OptimizerFailed, SegmentTooShort
from .model import VolatilityModel
from .simulate import ObservedSeries, _floor_index

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class EstimationConfig:
    """Window and optimizer settings.

    In ``edge`` mode the first-stage parameters come from ``[0, a_n]`` and
    ``[T - a_n, T]``; when ``a_n`` is not given it is ``1 / (n vartheta^delta)``.
    In ``fixed`` mode they come from ``[0, t0]`` and ``[t1, T]``.
    """
    window_mode: str = "edge"
    a_n: Optional[float] = None
    b_n: Optional[float] = None
    vartheta: Optional[float] = None
    delta: float = 3.0
    t0: Optional[float] = None
    t1: Optional[float] = None
    xtol: float = 1e-8
    ftol: float = 1e-8
    max_iter: int = 200
    grid_points: int = 33
    multistart: int = 5

    def __post_init__(self):
        if self.window_mode not in ("edge", "fixed"):
            raise ValueError("window_mode must be 'edge' or 'fixed'")
        if self.window_mode == "fixed" and (self.t0 is None or self.t1 is None):
            raise ValueError("fixed window mode needs t0 and t1")

    def windows(self, n: int, T: float) -> tuple[float, float]:
        a_n = self.a_n
        if a_n is None:
            if self.vartheta is None:
                raise ValueError("a_n is not given and cannot be derived without vartheta")
            a_n = 1.0 / (n * self.vartheta ** self.delta)
        b_n = a_n if self.b_n is None else self.b_n
        for name, v in (("a_n", a_n), ("b_n", b_n)):
            if not 0 < v < T / 2:
                raise ValueError(f"{name}={v:.6g} must lie in (0, T/2)")
        if self.window_mode == "fixed" and not 0 < self.t0 < self.t1 < T:
            raise ValueError("fixed windows need 0 < t0 < t1 < T")
        return float(a_n), float(b_n)


@dataclass
class ThetaFit:
    theta: np.ndarray
    value: float
    iterations: int
    converged: bool


@dataclass
class TwoStageFit:
    theta_hat0: list
    theta_hat1: list
    t_hat: float
    k_hat: int
    theta_check0: list
    theta_check1: list
    t_check: float
    k_check: int
    a_n: float
    b_n: float
    n: int
    T: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def changepoint_argmin(profile: ContrastProfile) -> tuple[int, float]:
    """Smallest split index attaining the minimum and its time k T / n."""
    values = np.asarray(profile.values)
    if values.shape != (profile.n + 1,) or not np.all(np.isfinite(values)):
        raise ValueError("invalid contrast profile")
    k = int(np.argmin(values))
    return k, k * profile.T / profile.n


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   xtol: float = 1e-8, max_iter: int = 200) -> tuple[float, float, int, bool]:
    """Minimise a unimodal scalar function on [lo, hi].

    Returns (x, f(x), iterations, converged); x is the best point evaluated.
    """
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best = min((fc, c), (fd, d))
    it = 0
    while b - a > xtol and it < max_iter:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
            best = min(best, (fd, d))
    return float(best[1]), float(best[0]), it, bool(b - a <= xtol)


def fit_theta_segment(series: ObservedSeries, i_from: int, i_to: int, model: VolatilityModel,
                      config: Optional[EstimationConfig] = None) -> ThetaFit:
    """Minimise the segment contrast over the parameter box."""
    config = config or EstimationConfig()
    length = i_to - i_from + 1
    if length < max(10, 2 * model.d0):
        raise SegmentTooShort(f"segment [{i_from}, {i_to}] has {length} intervals")
    lo, hi = model.box

    def contrast(theta):
        return segment_contrast(series, model, np.clip(theta, lo, hi), i_from, i_to)

    if model.d0 == 1:
        grid = np.linspace(lo[0], hi[0], config.grid_points)
        vals = np.array([contrast(np.array([g])) for g in grid])
        if not np.all(np.isfinite(vals)):
            raise OptimizerFailed("non-finite contrast on the bracketing grid")
        j = int(np.argmin(vals))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        x, fx, it, ok = golden_section(lambda t: contrast(np.array([t])), a, b,
                                       config.xtol, config.max_iter)
        if vals[j] < fx:
            x, fx = grid[j], vals[j]
        if not ok:
            raise OptimizerFailed(f"golden section did not converge in {it} iterations")
        return ThetaFit(np.array([x], dtype=float), float(fx), it, bool(ok))

    starts = [0.5 * (lo + hi)]
    if config.multistart > 1:
        halton = qmc.Halton(model.d0, scramble=False).random(config.multistart)[1:]
        starts += [lo + u * (hi - lo) for u in halton]
    best = None
    total_it = 0
    for x0 in starts:
        res = optimize.minimize(contrast, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                                options={"xatol": config.xtol * 100, "fatol": config.ftol,
                                         "maxiter": config.max_iter * model.d0})
        total_it += res.nit
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise OptimizerFailed("Nelder-Mead produced no finite minimum")
    theta = np.clip(best.x, lo, hi)
    return ThetaFit(theta, float(best.fun), total_it, bool(best.success))


def _left_window(n: int, T: float, t: float) -> tuple[int, int]:
    return 1, min(n, _floor_index(n * t / T))


def _right_window(n: int, T: float, t: float) -> tuple[int, int]:
    return max(1, _floor_index(n * t / T) + 1), n


def two_stage_estimate(series: ObservedSeries, model: VolatilityModel,
                       config: Optional[EstimationConfig] = None) -> TwoStageFit:
    config = config or EstimationConfig()
    n, T = series.n, series.T
    a_n, b_n = config.windows(n, T)
    min_len = max(10, 2 * model.d0)
    if config.window_mode == "edge":
        left = _left_window(n, T, a_n)
        right = (n - left[1] + 1, n)
    else:
        left, right = _left_window(n, T, config.t0), _right_window(n, T, config.t1)
    for w in (left, right):
        if w[1] - w[0] + 1 < min_len:
            raise SegmentTooShort(f"first-stage window {w} has fewer than {min_len} intervals")

    fit0 = fit_theta_segment(series, *left, model, config)
    fit1 = fit_theta_segment(series, *right, model, config)
    prof_hat = contrast_profile(series, model, fit0.theta, fit1.theta)
    k_hat, t_hat = changepoint_argmin(prof_hat)

    diag = {"first_stage_windows": [list(left), list(right)],
            "fallback_left": False, "fallback_right": False}
    left2 = _left_window(n, T, t_hat - b_n) if t_hat - b_n > 0 else (1, 0)
    right2 = _right_window(n, T, t_hat + b_n) if t_hat + b_n < T else (n + 1, n)
    if left2[1] - left2[0] + 1 < min_len:
        left2, diag["fallback_left"] = left, True
    if right2[1] - right2[0] + 1 < min_len:
        right2, diag["fallback_right"] = right, True
    diag["second_stage_windows"] = [list(left2), list(right2)]

    check0 = fit0 if left2 == left else fit_theta_segment(series, *left2, model, config)
    check1 = fit1 if right2 == right else fit_theta_segment(series, *right2, model, config)
    prof_check = contrast_profile(series, model, check0.theta, check1.theta)
    k_check, t_check = changepoint_argmin(prof_check)

    diag.update({
        "contrast_min_hat": float(prof_hat.values[k_hat]),
        "contrast_min_check": float(prof_check.values[k_check]),
        "iterations": [fit0.iterations, fit1.iterations, check0.iterations, check1.iterations],
        "converged": [fit0.converged, fit1.converged, check0.converged, check1.converged],
    })
    return TwoStageFit(
        theta_hat0=fit0.theta.tolist(), theta_hat1=fit1.theta.tolist(),
        t_hat=t_hat, k_hat=k_hat,
        theta_check0=check0.theta.tolist(), theta_check1=check1.theta.tolist(),
        t_check=t_check, k_check=k_check,
        a_n=a_n, b_n=b_n, n=n, T=T, diagnostics=diag,
    )


def final_profile(series: ObservedSeries, model: VolatilityModel, fit: TwoStageFit) -> ContrastProfile:
    return contrast_profile(series, model, fit.theta_check0, fit.theta_check1)
