"""Command-line entry point: ``fdcov {simulate,test,permute,bootstrap}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from . import __version__
from .covtest import TestConfig, run_split_tests
from .data import ingest_csv
from .errors import FdcovError, InputError
from .numerics import RNG_ALGORITHM
from .scores import write_moments_csv
from .simulation import (
    ScenarioSpec,
    SimulationDesign,
    bootstrap_study,
    permutation_study,
    rejection_curve,
    write_table_csv,
)
from .smoothing import write_surface_csv
from .spectral import write_eigensystem_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def parse_k_range(text: str) -> List[int]:
    """``"1:8"`` -> 1..8 inclusive, ``"1,3,5"`` -> [1, 3, 5], ``"4"`` -> [4]."""
    try:
        if ":" in text:
            lo, hi = (int(p) for p in text.split(":"))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InputError(f"cannot parse K range {text!r}") from None
    if not ks or min(ks) < 1:
        raise InputError(f"K range {text!r} must contain positive integers")
    return ks


def _floats(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list {text!r}") from None


def _add_test_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", default="1:8", help="truncation levels, e.g. 1:8 or 1,2,4 (default 1:8)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--grid-size", type=int, default=51)
    p.add_argument("--bandwidth-x", type=float, default=None, help="override the covariance bandwidth of group X")
    p.add_argument("--bandwidth-y", type=float, default=None, help="override the covariance bandwidth of group Y")
    p.add_argument("--c-h", type=float, default=1.0, help="constant of the default bandwidth rule")
    p.add_argument("--raw-denominator", action="store_true", help="fixed-denominator smoother instead of Nadaraya-Watson")
    p.add_argument("--eigensolver", choices=["jacobi", "lapack"], default="jacobi")
    p.add_argument("--out", default=None, help="output file (default: stdout)")


def _add_csv_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", required=True, help="long-format CSV with subject_id,time,value,group")
    p.add_argument("--rescale-time", action="store_true", help="map observation times onto [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdcov", description="Two-sample covariance test for discretely observed functional data.")
    parser.add_argument("--version", action="version", version=f"fdcov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="size/power curves under the sine-basis simulation design")
    sim.add_argument("--scenario", choices=["I", "II", "custom"], default="I")
    sim.add_argument("--a", default="0,0.2,0.4,0.6", help="comma-separated signal strengths")
    sim.add_argument("--gamma", default=None, help="comma-separated scaling vector for --scenario custom")
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--m", type=int, default=100)
    sim.add_argument("--N", type=int, default=15)
    sim.add_argument("--M", type=int, default=None, help="observations per Y subject (default: --N)")
    sim.add_argument("--sigma", type=float, default=0.1)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--n-jobs", type=int, default=1)
    sim.add_argument("--baseline-perms", type=int, default=0,
                     help="also run the pre-smoothed fully-observed statistic with this many permutations")
    _add_test_options(sim)

    test = sub.add_parser("test", help="run the split-sample test on a CSV dataset")
    _add_csv_options(test)
    test.add_argument("--split", choices=["random", "even_odd"], default="random")
    test.add_argument("--diagnostics", default=None, help="directory for surface/eigenfunction/moment CSVs")
    _add_test_options(test)

    for name, helptext in (("permute", "rejection rates over label-permuted datasets"),
                           ("bootstrap", "rejection rates over within-group bootstrap resamples")):
        p = sub.add_parser(name, help=helptext)
        _add_csv_options(p)
        p.add_argument("--reps", type=int, default=1000)
        p.add_argument("--n-jobs", type=int, default=1)
        _add_test_options(p)
    return parser


def _config(args, ks: List[int], split: str = "random") -> TestConfig:
    return TestConfig(K=ks, grid_size=args.grid_size, bandwidth_x=args.bandwidth_x, bandwidth_y=args.bandwidth_y,
                      c_h=args.c_h, split=split, seed=args.seed, raw_denominator=args.raw_denominator,
                      eigensolver=args.eigensolver)


def _metadata(args, **extra) -> dict:
    meta = {k: v for k, v in vars(args).items()}
    meta["rng_algorithm"] = RNG_ALGORITHM
    meta["seed_rule"] = "replication r uses splitmix64(splitmix64(seed) ^ r)"
    meta["bandwidth_rule"] = "covariance: c_h * (sum_i N_i(N_i-1))^(-1/5) per group and half, clamped to [2/G, 0.5]"
    meta["fdcov_version"] = __version__
    meta.update(extra)
    return meta


def _emit_table(rows, args, meta) -> None:
    if args.out:
        write_table_csv(args.out, rows)
        with open(args.out + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, default=str)
    else:
        write_table_csv("/dev/stdout", rows)


def _load(args):
    x, y, report = ingest_csv(args.csv, rescale_time=args.rescale_time)
    if report.dropped_subjects:
        print(f"dropped_subjects={report.dropped_subjects}", file=sys.stderr)
    return x, y, report


def _ingest_meta(x, y, report) -> dict:
    return {"groups": {x.group_label: len(x), y.group_label: len(y)}, "dropped_subjects": report.dropped_subjects,
            "time_rescaled": report.rescaled, "raw_time_range": [report.time_min, report.time_max]}


def cmd_simulate(args) -> int:
    ks = parse_k_range(args.K)
    design = SimulationDesign(n=args.n, m=args.m, N=args.N, M=args.M or args.N, sigma=args.sigma)
    if args.scenario == "custom":
        if args.gamma is None:
            raise InputError("--scenario custom requires --gamma")
        scenarios = [ScenarioSpec("custom", a, tuple(a * g for g in _floats(args.gamma))) for a in _floats(args.a)]
    else:
        scenarios = [ScenarioSpec(args.scenario, a) for a in _floats(args.a)]
    rows = rejection_curve(design, scenarios, ks, args.level, args.reps, args.seed, _config(args, ks),
                           args.n_jobs, args.baseline_perms)
    _emit_table(rows, args, _metadata(args))
    return EXIT_OK


def cmd_test(args) -> int:
    ks = parse_k_range(args.K)
    x, y, report = _load(args)
    results, fits = run_split_tests(x, y, _config(args, ks, args.split), return_fits=True)
    records = [r.to_record() for K in ks for r in results[K]]
    payload = {"metadata": _metadata(args, **_ingest_meta(x, y, report)), "results": records}
    text = json.dumps(payload, indent=2, default=str)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    if args.diagnostics:
        os.makedirs(args.diagnostics, exist_ok=True)
        for name, fit in fits.items():
            write_surface_csv(os.path.join(args.diagnostics, f"surface_{name}.csv"), fit.surface)
            write_eigensystem_csv(os.path.join(args.diagnostics, f"eigen_{name}.csv"), fit.system)
            write_moments_csv(os.path.join(args.diagnostics, f"moments_{name}.csv"), fit.moments)
    return EXIT_OK


def cmd_resample(args) -> int:
    ks = parse_k_range(args.K)
    x, y, report = _load(args)
    study = permutation_study if args.command == "permute" else bootstrap_study
    rows = study(x, y, _config(args, ks), args.reps, args.seed, args.level, args.n_jobs)
    _emit_table(rows, args, _metadata(args, **_ingest_meta(x, y, report)))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"simulate": cmd_simulate, "test": cmd_test, "permute": cmd_resample, "bootstrap": cmd_resample}[args.command]
    try:
        return handler(args)
    except FdcovError as exc:
        print(f"fdcov: error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_INPUT, EXIT_NUMERICAL) else EXIT_NUMERICAL
    except OSError as exc:
        print(f"fdcov: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
