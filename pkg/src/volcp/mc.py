"""Monte Carlo harness for the estimator tables and the studentised limit check.

Replications are grouped into fixed-size chunks (independent of the worker
count) and every replication draws from its own stream, so summaries are
identical whether chunks run in one process or many.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .contrast import contrast_profile
from .errors import McAborted, VolcpError
from .estimate import EstimationConfig, changepoint_argmin, two_stage_estimate
from .limitlaw import GAMMA_CONVENTIONS, ks_distance, reference_table, studentize
from .model import VolatilityModel
from .simulate import Scenario, simulate_batch

CHUNK = 25
MAX_FAILURE_RATE = 0.10
ESTIMATORS = ("t_tilde", "theta_hat0", "theta_hat1", "t_hat", "theta_check0", "theta_check1", "t_check")


@dataclass
class Replication:
    rep: int
    stats: Optional[dict] = None
    z: dict = field(default_factory=dict)
    error: Optional[str] = None


def _flatten(name, value):
    value = np.atleast_1d(value)
    if value.size == 1:
        return {name: float(value[0])}
    return {f"{name}[{j}]": float(v) for j, v in enumerate(value)}


def _replicate(series, rep, scenario, model, config, conventions) -> Replication:
    try:
        bench = contrast_profile(series, model, scenario.theta0_star, scenario.theta1_star)
        _, t_tilde = changepoint_argmin(bench)
        fit = two_stage_estimate(series, model, config)
        stats = {"t_tilde": t_tilde}
        for name in ESTIMATORS[1:]:
            stats.update(_flatten(name, getattr(fit, name)))
        z = {conv: studentize(fit, series, model, scenario.t_star, scenario.vartheta, conv)
             for conv in conventions}
        return Replication(rep, stats, z)
    except (VolcpError, ArithmeticError) as exc:
        return Replication(rep, error=type(exc).__name__)


def _run_chunk(scenario: Scenario, config: EstimationConfig, reps: Sequence[int],
               model: Optional[VolatilityModel], conventions: tuple) -> list[Replication]:
    model = model or scenario.build_model()
    try:
        paths = list(zip(reps, simulate_batch(scenario, reps, model)))
        failed = []
    except (VolcpError, ArithmeticError):
        paths, failed = [], []
        for rep in reps:
            try:
                paths.append((rep, simulate_batch(scenario, [rep], model)[0]))
            except (VolcpError, ArithmeticError) as exc:
                failed.append(Replication(rep, error=type(exc).__name__))
    out = [_replicate(s, rep, scenario, model, config, conventions) for rep, s in paths]
    return sorted(out + failed, key=lambda r: r.rep)


def run_replications(scenario: Scenario, config: Optional[EstimationConfig] = None, M: int = 1000,
                     seed: Optional[int] = None, workers: int = 1,
                     model: Optional[VolatilityModel] = None,
                     conventions: Sequence[str] = ()) -> list[Replication]:
    if M < 1:
        raise ValueError("M must be at least 1")
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    config = config or EstimationConfig(vartheta=scenario.vartheta)
    conventions = tuple(conventions)
    chunks = [list(range(s, min(s + CHUNK, M))) for s in range(0, M, CHUNK)]
    if workers <= 1 or len(chunks) == 1:
        parts = [_run_chunk(scenario, config, c, model, conventions) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [scenario] * len(chunks), [config] * len(chunks),
                                  chunks, [model] * len(chunks), [conventions] * len(chunks)))
    reps = [r for part in parts for r in part]
    failures = sum(r.error is not None for r in reps)
    if failures > MAX_FAILURE_RATE * M:
        reasons = Counter(r.error for r in reps if r.error)
        raise McAborted(f"{failures} of {M} replications failed: {dict(reasons)}")
    return reps


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    m = len(values)
    if m == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / m
    if m == 1:
        return mean, math.nan
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (m - 1))


@dataclass
class McSummary:
    scenario: dict
    a_n: float
    b_n: float
    M: int
    failures: int
    failure_reasons: dict
    stats: dict
    replications: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("replications")
        return _nan_to_none(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        cols = [c for c in self.stats]
        head = ["n", "a_n"] + cols
        width = 14
        lines = ["".join(h.rjust(width) for h in head)]
        means = [str(self.scenario["n"]), f"{self.a_n:.4f}"]
        sds = ["", ""]
        for c in cols:
            s = self.stats[c]
            means.append(f"{s['mean']:.3f}" if s["count"] else "NA")
            sds.append(f"({s['sd']:.3f})" if s["count"] > 1 else "(NA)")
        lines.append("".join(v.rjust(width) for v in means))
        lines.append("".join(v.rjust(width) for v in sds))
        lines.append(f"M={self.M} failures={self.failures}")
        return "\n".join(lines)

    def raw_csv(self) -> str:
        cols = list(self.stats)
        lines = ["rep," + ",".join(cols) + ",error"]
        for r in self.replications:
            vals = [f"{r.stats[c]:.17g}" for c in cols] if r.stats else [""] * len(cols)
            lines.append(",".join([str(r.rep), *vals, r.error or ""]))
        return "\n".join(lines) + "\n"


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def summarize(scenario: Scenario, config: EstimationConfig, reps: list[Replication]) -> McSummary:
    ok = [r for r in reps if r.stats is not None]
    names = list(ok[0].stats) if ok else list(ESTIMATORS)
    stats = {}
    for name in names:
        mean, sd = mean_sd([r.stats[name] for r in ok])
        stats[name] = {"mean": mean, "sd": sd, "count": len(ok)}
    a_n, b_n = config.windows(scenario.n, scenario.T)
    return McSummary(scenario=asdict(scenario), a_n=a_n, b_n=b_n, M=len(reps),
                     failures=len(reps) - len(ok),
                     failure_reasons=dict(sorted(Counter(r.error for r in reps if r.error).items())),
                     stats=stats, replications=reps)


def run_table_experiment(scenario: Scenario, config: Optional[EstimationConfig] = None, M: int = 1000,
                         seed: Optional[int] = None, workers: int = 1,
                         model: Optional[VolatilityModel] = None) -> McSummary:
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    config = config or EstimationConfig(vartheta=scenario.vartheta)
    reps = run_replications(scenario, config, M, None, workers, model)
    return summarize(scenario, config, reps)


@dataclass
class StudentizedResult:
    z: dict
    ks: dict
    best: str
    reference: np.ndarray
    summary: McSummary

    def to_dict(self) -> dict:
        return {"ks": self.ks, "best": self.best, "M": self.summary.M,
                "failures": self.summary.failures, "n": self.summary.scenario["n"]}


def run_studentized_experiment(scenario: Scenario, config: Optional[EstimationConfig] = None,
                               M: int = 2000, seed: Optional[int] = None,
                               gamma_convention: str = "best", workers: int = 1,
                               model: Optional[VolatilityModel] = None) -> StudentizedResult:
    """Studentised errors of the second-stage change point against F.

    ``gamma_convention="best"`` evaluates every normaliser defined for the
    model and reports the one with the smaller KS distance.
    """
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    model = model or scenario.build_model()
    if gamma_convention == "best":
        conventions = GAMMA_CONVENTIONS if model.name == "model1" else ("theorem",)
    elif gamma_convention in GAMMA_CONVENTIONS:
        conventions = (gamma_convention,)
    else:
        raise ValueError(f"unknown gamma convention {gamma_convention!r}")
    config = config or EstimationConfig(vartheta=scenario.vartheta)
    reps = run_replications(scenario, config, M, None, workers, model, conventions)
    z = {c: np.array([r.z[c] for r in reps if r.error is None]) for c in conventions}
    ks = {c: ks_distance(v) for c, v in z.items()}
    best = min(conventions, key=lambda c: (ks[c], conventions.index(c)))
    return StudentizedResult(z=z, ks=ks, best=best, reference=reference_table(-6.0, 6.0, 0.01),
                             summary=summarize(scenario, config, reps))
