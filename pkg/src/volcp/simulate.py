"""Euler-Maruyama simulation of the two-regime volatility model.

Every path owns its random stream, derived from ``(seed, replication)``
through ``numpy.random.SeedSequence`` so that a path never depends on which
other paths are simulated alongside it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import NonFinite, SeriesFormatError, StateExitedDomain
from .model import VolatilityModel, get_model, sigma_batch

DEFAULT_SUBSTEPS = 10


@dataclass
class ObservedSeries:
    T: float
    n: int
    times: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(self.n + 1, -1)
        self.x = np.asarray(self.x, dtype=float).reshape(self.n + 1, -1)
        if self.times.shape != (self.n + 1,):
            raise ValueError("times must have n+1 entries")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise NonFinite("series contains non-finite values")

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def dy(self) -> np.ndarray:
        return np.diff(self.y, axis=0)

    @classmethod
    def from_arrays(cls, y, T: float = 1.0, x=None) -> "ObservedSeries":
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        n = y.shape[0] - 1
        times = np.arange(n + 1) * (T / n)
        return cls(T=float(T), n=n, times=times, y=y, x=y if x is None else x)


@dataclass
class Scenario:
    model: str
    theta0_star: list
    theta1_star: list
    t_star: float
    x0: list
    n: int
    T: float = 1.0
    substeps: int = DEFAULT_SUBSTEPS
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta0_star = [float(v) for v in np.atleast_1d(self.theta0_star)]
        self.theta1_star = [float(v) for v in np.atleast_1d(self.theta1_star)]
        self.x0 = [float(v) for v in np.atleast_1d(self.x0)]
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        self.n = int(self.n)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.t_star < self.T:
            raise ValueError(f"t_star must lie in (0, T), got {self.t_star}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be an integer >= 1")
        self.substeps = int(self.substeps)
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)

    @property
    def vartheta(self) -> float:
        return float(np.linalg.norm(np.subtract(self.theta1_star, self.theta0_star)))

    @property
    def k_star(self) -> int:
        """Number of observation intervals lying entirely before the change."""
        return _floor_index(self.n * self.t_star / self.T)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls(**json.loads(text))

    def build_model(self) -> VolatilityModel:
        box = self.params.get("theta_box")
        return get_model(self.model, None if box is None else tuple(box))


def table_scenario(table: int, n: int, seed: int = 0, substeps: int = DEFAULT_SUBSTEPS) -> Scenario:
    """Numerical-study scenarios: theta0 = 0.2, theta1 = 0.2 + n^(-1/4), X0 = 5, T = 1;
    preset 1 uses model1 with t* = 0.6, preset 2 the square-root model with t* = 0.7."""
    if table not in (1, 2):
        raise ValueError("table must be 1 or 2")
    return Scenario(model="model1" if table == 1 else "cir",
                    theta0_star=[0.2], theta1_star=[0.2 + n ** -0.25],
                    t_star=0.6 if table == 1 else 0.7, x0=[5.0], n=n, T=1.0,
                    substeps=substeps, seed=seed)


def _floor_index(q: float) -> int:
    r = round(q)
    return int(r) if abs(q - r) < 1e-9 else math.floor(q)


def _ceil_index(q: float) -> int:
    r = round(q)
    return int(r) if abs(q - r) < 1e-9 else math.ceil(q)


def stream(seed: int, replication: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replication,)))


def brownian_increments(scenario: Scenario, r: int, replication: int = 0) -> np.ndarray:
    """Fine-grid Wiener increments, shape ``(n * substeps, r)``."""
    steps = scenario.n * scenario.substeps
    dt = scenario.T / steps
    return stream(scenario.seed, replication).standard_normal((steps, r)) * math.sqrt(dt)


def euler_paths(model: VolatilityModel, scenario: Scenario, dW: np.ndarray) -> np.ndarray:
    """Integrate a batch of paths on the fine grid.

    ``dW`` has shape ``(B, n * substeps, r)``; returns the coarse samples with
    shape ``(B, n + 1, d)``.  The parameter on a fine step starting at time s
    is theta0* when s < t* and theta1* otherwise.
    """
    B, steps, r = dW.shape
    if steps != scenario.n * scenario.substeps or r != model.r:
        raise ValueError("increment array does not match scenario/model dimensions")
    dt = scenario.T / steps
    switch = _ceil_index(scenario.t_star * steps / scenario.T)
    th0 = np.asarray(scenario.theta0_star)
    th1 = np.asarray(scenario.theta1_star)
    y = np.tile(np.asarray(scenario.x0, dtype=float), (B, 1))
    if y.shape[1] != model.d:
        raise ValueError(f"x0 must have {model.d} coordinates")
    out = np.empty((B, scenario.n + 1, model.d))
    out[:, 0] = y
    scalar = model.d == 1 and model.r == 1
    floor = model.state_floor
    for j in range(steps):
        theta = th0 if j < switch else th1
        sig = sigma_batch(model, y, theta)
        if scalar:
            step = sig[:, :, 0] * dW[:, j]
        else:
            step = np.einsum("bdr,br->bd", sig, dW[:, j])
        if model.drift is not None:
            step = step + np.asarray(model.drift(j * dt, y), dtype=float).reshape(B, -1) * dt
        y = y + step
        if floor is not None:
            y = np.where(y < floor, 2.0 * floor - y, y)
        if (j + 1) % scenario.substeps == 0:
            if not np.all(np.isfinite(y)):
                raise NonFinite(f"path became non-finite at fine step {j + 1}")
            if model.in_domain is not None and not np.all(model.in_domain(y)):
                raise StateExitedDomain(f"path left the state domain at fine step {j + 1}")
            out[:, (j + 1) // scenario.substeps] = y
    return out


def simulate_batch(scenario: Scenario, replications: Sequence[int],
                   model: Optional[VolatilityModel] = None) -> list[ObservedSeries]:
    model = model or scenario.build_model()
    dW = np.stack([brownian_increments(scenario, model.r, rep) for rep in replications])
    paths = euler_paths(model, scenario, dW)
    times = np.arange(scenario.n + 1) * (scenario.T / scenario.n)
    return [ObservedSeries(T=scenario.T, n=scenario.n, times=times, y=p, x=p) for p in paths]


def simulate_path(scenario: Scenario, model: Optional[VolatilityModel] = None,
                  replication: int = 0) -> ObservedSeries:
    return simulate_batch(scenario, [replication], model)[0]


# -- CSV serialisation -------------------------------------------------------

def write_csv(series: ObservedSeries, path, include_x: Optional[bool] = None) -> None:
    if include_x is None:
        include_x = not (series.x.shape == series.y.shape and np.array_equal(series.x, series.y))
    d, d1 = series.y.shape[1], series.x.shape[1]
    header = ["t"] + [f"y{j + 1}" for j in range(d)]
    if include_x:
        header += [f"x{j + 1}" for j in range(d1)]
    lines = [",".join(header)]
    for i in range(series.n + 1):
        row = [series.times[i], *series.y[i]]
        if include_x:
            row.extend(series.x[i])
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> ObservedSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SeriesFormatError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise SeriesFormatError("header must start with 't'", 1)
    ycols = [j for j, h in enumerate(header) if h.startswith("y")]
    xcols = [j for j, h in enumerate(header) if h.startswith("x")]
    if not ycols or len(ycols) + len(xcols) + 1 != len(header):
        raise SeriesFormatError("header must be t,y1..yd[,x1..xd1]", 1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SeriesFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise SeriesFormatError(f"non-numeric field in {row!r}", lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise SeriesFormatError("non-finite value", lineno)
        data.append(vals)
    if len(data) < 2:
        raise SeriesFormatError("need at least two samples", len(rows))
    arr = np.asarray(data)
    t = arr[:, 0]
    n = len(t) - 1
    if t[0] != 0.0:
        raise SeriesFormatError("first time stamp must be 0", 2)
    T = t[-1]
    grid = np.arange(n + 1) * (T / n)
    bad = np.abs(t - grid) > 1e-9 * max(T, 1.0)
    if T <= 0 or np.any(bad):
        i = int(np.argmax(bad)) if np.any(bad) else n
        raise SeriesFormatError("time stamps must be equally spaced and increasing", i + 2)
    y = arr[:, ycols]
    x = arr[:, xcols] if xcols else y
    return ObservedSeries(T=float(T), n=n, times=grid, y=y, x=x)
