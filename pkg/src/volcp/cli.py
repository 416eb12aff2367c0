"""Command-line entry point: ``volcp {simulate,estimate,montecarlo,limitlaw}``.

Exit codes: 0 success, 1 estimation or numerical failure, 2 input error.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import limitlaw, mc
from .errors import OutOfBox, SeriesFormatError, VolcpError
from .estimate import EstimationConfig, final_profile, two_stage_estimate
from .model import get_model
from .simulate import Scenario, read_csv, simulate_path, table_scenario, write_csv

DEFAULT_SEED = 12345
PRESETS = {"table1": 1, "table2": 2, "1": 1, "2": 2}


class InputError(Exception):
    pass


def default_seed() -> int:
    env = os.environ.get("VOLCP_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise InputError(f"VOLCP_SEED must be an integer, got {env!r}") from None


def _write(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv_rows(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


# -- scenario flags -----------------------------------------------------------

def _add_scenario_flags(p, n_default=None):
    p.add_argument("--preset", "--table", dest="preset", choices=sorted(PRESETS),
                   help="load a numerical-study scenario (table1: model1, table2: cir)")
    p.add_argument("--model", choices=["model1", "cir"])
    p.add_argument("--n", type=int, default=n_default, help="number of sampling intervals")
    p.add_argument("--theta0", type=float, help="true parameter before the change")
    p.add_argument("--theta1", type=float, help="true parameter after the change")
    p.add_argument("--gamma", type=float, help="set theta1 = theta0 + n^-gamma")
    p.add_argument("--tstar", type=float, help="true change point")
    p.add_argument("--x0", type=float, help="initial value")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--substeps", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)


def scenario_from_args(args) -> Scenario:
    seed = default_seed() if args.seed is None else args.seed
    if args.n is None:
        raise InputError("--n is required")
    if args.n < 1:
        raise InputError(f"--n must be a positive integer, got {args.n}")
    if args.preset is not None:
        sc = table_scenario(PRESETS[args.preset], args.n, seed=seed, substeps=args.substeps)
        overrides = {k: v for k, v in (("t_star", args.tstar), ("x0", args.x0)) if v is not None}
        return Scenario(**{**sc.__dict__, **overrides}) if overrides else sc
    missing = [f for f in ("model", "theta0", "tstar", "x0") if getattr(args, f) is None]
    if missing:
        raise InputError("missing flags: " + ", ".join("--" + m for m in missing))
    if (args.theta1 is None) == (args.gamma is None):
        raise InputError("give exactly one of --theta1 and --gamma")
    theta1 = args.theta1 if args.gamma is None else args.theta0 + args.n ** -args.gamma
    return Scenario(model=args.model, theta0_star=[args.theta0], theta1_star=[theta1],
                    t_star=args.tstar, x0=[args.x0], n=args.n, T=args.T,
                    substeps=args.substeps, seed=seed)


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = scenario_from_args(args)
    series = simulate_path(sc)
    write_csv(series, args.output)
    sidecar_path(args.output).write_text(sc.to_json() + "\n")
    print(f"wrote {series.n + 1} samples to {args.output}")
    return 0


def _estimation_config(args, sidecar, n) -> EstimationConfig:
    vartheta = args.vartheta
    if vartheta is None and sidecar is not None:
        vartheta = sidecar.vartheta
    if args.t0 is not None or args.t1 is not None:
        if args.t0 is None or args.t1 is None:
            raise InputError("fixed-interval mode needs both --t0 and --t1")
        a_n = args.an
        if a_n is None and vartheta is None:
            raise InputError("fixed-interval mode needs --bn/--an or a known separation")
        return EstimationConfig(window_mode="fixed", t0=args.t0, t1=args.t1, a_n=a_n,
                                b_n=args.bn, vartheta=vartheta, delta=args.delta)
    if args.an is None and vartheta is None:
        raise InputError("give --an (window length) or --vartheta, or keep the scenario sidecar")
    return EstimationConfig(a_n=args.an, b_n=args.bn, vartheta=vartheta, delta=args.delta)


def cmd_estimate(args) -> int:
    series = read_csv(args.input)
    side = sidecar_path(args.input)
    sidecar = None
    if not args.no_sidecar and side.exists():
        try:
            sidecar = Scenario.from_json(side.read_text())
        except (ValueError, TypeError) as exc:
            raise InputError(f"bad scenario sidecar {side}: {exc}") from None
    model_name = args.model or (sidecar.model if sidecar else None)
    if model_name is None:
        raise InputError("--model is required when no scenario sidecar is present")
    model = get_model(model_name, tuple(args.theta_box) if args.theta_box else None)
    config = _estimation_config(args, sidecar, series.n)
    fit = two_stage_estimate(series, model, config)
    if args.profile:
        final_profile(series, model, fit).to_csv(args.profile)
    if args.json == "-":
        sys.stdout.write(fit.to_json() + "\n")
        return 0
    if args.json:
        Path(args.json).write_text(fit.to_json() + "\n")
    rows = [("a_n / b_n", f"{fit.a_n:.4f} / {fit.b_n:.4f}"),
            ("theta_hat0", _fmt(fit.theta_hat0)), ("theta_hat1", _fmt(fit.theta_hat1)),
            ("t_hat", f"{fit.t_hat:.6g}  (k={fit.k_hat})"),
            ("theta_check0", _fmt(fit.theta_check0)), ("theta_check1", _fmt(fit.theta_check1)),
            ("t_check", f"{fit.t_check:.6g}  (k={fit.k_check})")]
    if sidecar is not None:
        rows.append(("true t*", f"{sidecar.t_star:.6g}"))
    for name, val in rows:
        print(f"{name:>14}  {val}")
    return 0


def _fmt(theta) -> str:
    return ", ".join(f"{v:.6f}" for v in theta)


def cmd_montecarlo(args) -> int:
    sc = scenario_from_args(args)
    config = EstimationConfig(vartheta=sc.vartheta, a_n=args.an, b_n=args.bn)
    summary = mc.run_table_experiment(sc, config, M=args.reps, workers=args.workers)
    print(summary.format_table())
    if args.json:
        _write(summary.to_json() + "\n", args.json)
    if args.raw:
        _write(summary.raw_csv(), args.raw)
    return 0


def _histogram_csv(values, bins, hist_range) -> str:
    counts, edges = np.histogram(values, bins=bins, range=hist_range)
    width = np.diff(edges)
    dens = counts / (max(len(values), 1) * width)
    mid = 0.5 * (edges[:-1] + edges[1:])
    rows = zip(edges[:-1], edges[1:], counts.astype(float), dens, limitlaw.density_f(mid))
    return _csv_rows(["bin_lo", "bin_hi", "count", "density", "f_mid"], rows)


def cmd_limitlaw(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    modes = [args.sample_caseB, args.sample_caseA, args.studentize]
    if sum(modes) > 1:
        raise InputError("choose one of --sample-caseB, --sample-caseA, --studentize")
    hist_range = tuple(args.hist_range) if args.hist_range else None
    if args.sample_caseB:
        sample = limitlaw.sample_caseB(args.gamma, args.grid_step, args.L, args.count, seed)
        _write(_csv_rows(["v"], ([v] for v in sample.values)), args.output)
        scaled = args.gamma * sample.values
        print(f"KS(gamma*v, F) = {limitlaw.ks_distance(scaled):.6f}", file=sys.stderr)
        if args.bins:
            _write(_histogram_csv(scaled, args.bins, hist_range), args.hist_output)
        return 0
    if args.sample_caseA:
        model = get_model(args.model or "model1")
        sample = limitlaw.sample_caseA(model, [args.x_star], [args.theta0_star], [args.theta1_star],
                                       args.L0, args.count, seed)
        _write(_csv_rows(["k"], ([str(int(v))] for v in sample.values)), args.output)
        return 0
    if args.studentize:
        sc = table_scenario(PRESETS[args.preset or "1"], args.n, seed=seed)
        res = mc.run_studentized_experiment(sc, M=args.reps, gamma_convention=args.convention,
                                            workers=args.workers)
        convs = list(res.z)
        _write(_csv_rows(["z_" + c for c in convs], zip(*(res.z[c] for c in convs))), args.output)
        ks = " ".join(f"{c}={res.ks[c]:.6f}" for c in convs)
        print(f"KS vs F: {ks} best={res.best} failures={res.summary.failures}")
        if args.bins:
            _write(_histogram_csv(res.z[res.best], args.bins, hist_range), args.hist_output)
        return 0
    if args.preset is None:
        raise InputError("nothing to do: give --table, --sample-caseB, --sample-caseA or --studentize")
    table = limitlaw.reference_table(args.xmin, args.xmax, args.step)
    _write(_csv_rows(["x", "f", "F"], table), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volcp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a change-point path to CSV")
    _add_scenario_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="two-stage change-point estimation on a CSV series")
    p.add_argument("input")
    p.add_argument("--model", choices=["model1", "cir"])
    p.add_argument("--theta-box", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--an", type=float, help="first-stage edge window length")
    p.add_argument("--bn", type=float, help="second-stage exclusion half-width")
    p.add_argument("--vartheta", type=float, help="separation used by the window rule")
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--t0", type=float, help="known lower bound of the change-point range")
    p.add_argument("--t1", type=float, help="known upper bound of the change-point range")
    p.add_argument("--no-sidecar", action="store_true", help="ignore the scenario JSON next to the CSV")
    p.add_argument("--profile", help="write the final contrast profile as k,t,phi CSV")
    p.add_argument("--json", help="write the fit as JSON ('-' for stdout instead of the table)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("montecarlo", help="Monte Carlo table of estimator means and sds")
    _add_scenario_flags(p, n_default=1000)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--an", type=float)
    p.add_argument("--bn", type=float)
    p.add_argument("--json", help="summary JSON path ('-' for stdout)")
    p.add_argument("--raw", help="per-replication CSV path")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("limitlaw", help="limit-law tables, samplers and the studentised experiment")
    p.add_argument("--table", dest="preset", nargs="?", const="closed", choices=["closed", *sorted(PRESETS)],
                   help="closed-form x,f,F table; with --studentize, the scenario preset")
    p.add_argument("--xmin", type=float, default=-6.0)
    p.add_argument("--xmax", type=float, default=6.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--sample-caseB", action="store_true")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--grid-step", type=float, default=0.005)
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--sample-caseA", action="store_true")
    p.add_argument("--model", choices=["model1", "cir"])
    p.add_argument("--x-star", type=float, default=5.0)
    p.add_argument("--theta0-star", type=float, default=0.2)
    p.add_argument("--theta1-star", type=float, default=0.5)
    p.add_argument("--L0", type=int, default=200)
    p.add_argument("--studentize", action="store_true")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--convention", choices=["best", *limitlaw.GAMMA_CONVENTIONS], default="best")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--bins", type=int, help="also emit a histogram with this many bins")
    p.add_argument("--hist-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--hist-output", help="histogram CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_limitlaw)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "limitlaw" and args.studentize and args.preset == "closed":
        args.preset = "1"
    try:
        return args.func(args)
    except (InputError, SeriesFormatError, OutOfBox, OSError, json.JSONDecodeError) as exc:
        print(f"volcp: error: {exc}", file=sys.stderr)
        return 2
    except VolcpError as exc:
        print(f"volcp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"volcp: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"volcp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
