"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/degenerate
error (or a failed ``validate`` check).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels, baselines, estimators as est
from .datamodel import Domain, finite_pop_corr, load_domain_ids, load_population
from .errors import DataError, DegenerateError, HRSAEError, ParseError, SizeLimitError
from .orderprob import (
    ERROR_LAWS,
    VARIANCE_MODES,
    fit_eta,
    load_order_probs,
    mc_order_probs,
    model_hash,
    save_order_probs,
    select_a0,
    theta_from_probs,
    theta_indicator_approx,
)
from .sampling import DesignSpec, Sample, design_coeffs, ht_domain_total
from .simstudy import load_config, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "HRSAE_THREADS"
ESTIMATE_METHODS = ("ht", "hr", "hr1", "rhr", "s", "syn", "greg", "eblup")
REPORT_COLUMNS = ("method", "point", "var_hat", "bias_hat", "mse_hat", "flags")


class UsageError(HRSAEError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _load_sample(path, pop):
    """Sample file: CSV with columns ``id`` and ``y``."""
    ids, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "y"} <= {f.strip() for f in reader.fieldnames}:
            raise ParseError("sample file needs columns 'id' and 'y'", 1)
        for row in reader:
            row = {k.strip(): v for k, v in row.items()}
            try:
                ys.append(float(row["y"]))
            except (TypeError, ValueError):
                raise ParseError(f"non-numeric y {row['y']!r}", reader.line_num) from None
            ids.append(row["id"])
    if not ids:
        raise DataError("sample file is empty")
    pos = pop.positions_of(ids)
    order = np.argsort(pos)
    design = DesignSpec(len(pos), pop.n_units)
    return Sample.from_indices(design, pos), np.asarray(ys)[order]


def _theta(args, pop, D):
    if args.orderprobs:
        P, _, digest = load_order_probs(args.orderprobs)
        if P.n_units != pop.n_units:
            raise DataError("order-probability cache does not match the population size")
        return theta_from_probs(P, D)
    eta = fit_eta(pop.z, pop.x, args.variance_mode, args.error_law)
    if args.theta_backend == "indicator":
        return theta_indicator_approx(pop.z, D, eta, select_a0(pop.z, D, eta))
    return theta_from_probs(mc_order_probs(eta, pop.z, args.R, args.seed, args.threads), D)


def _point_report(method, value, flags=()):
    if value is None:
        return est.EstimateReport(method, float("nan"), flags=frozenset(set(flags) | {est.UNAVAILABLE}))
    return est.EstimateReport(method, float(value), flags=frozenset(flags))


def cmd_estimate(args) -> int:
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in ESTIMATE_METHODS]
    if bad:
        raise UsageError(f"unknown method {bad[0]!r}; choose from {','.join(ESTIMATE_METHODS)}")
    pop = load_population(args.pop)
    D = Domain.from_ids(pop, load_domain_ids(args.domain))
    sample, y_s = _load_sample(args.sample, pop)
    x_s = pop.x[sample.indices]
    coeffs = design_coeffs(sample.design)
    rho = finite_pop_corr(pop.x, pop.z) if args.rho_xz is None else args.rho_xz
    t_xD = float(pop.x[D.members].sum())
    needs_theta = {"hr", "hr1", "rhr"} & set(methods)
    theta = _theta(args, pop, D) if needs_theta else None

    reports = []
    for method in methods:
        if method == "ht":
            direct = ht_domain_total(sample, y_s, D)
            reports.append(_point_report("ht", direct.total, {est.EMPTY_INTERSECTION} if direct.empty else ()))
        elif method == "hr":
            reports.append(est.hr_mse_est(sample, theta, y_s, coeffs, rho))
        elif method == "hr1":
            reports.append(_point_report("hr1", est.hr1_ratio(sample, theta, y_s)))
        elif method == "rhr":
            reports.append(est.rhr_mse_est(sample, theta, y_s, x_s, t_xD, coeffs, rho))
        elif method == "s":
            reports.append(_point_report("s", baselines.simple_synthetic(sample, y_s, D.size_m, pop.n_units)))
        elif method == "syn":
            reports.append(_point_report("syn", baselines.syn_estimator(sample, pop.x, y_s, D)))
        elif method == "greg":
            value = baselines.greg_estimator(sample, pop.x, y_s, D)
            reports.append(_point_report("greg", value, {est.EMPTY_INTERSECTION} if value is None else ()))
        elif method == "eblup":
            fit = baselines.eblup_fit(sample, pop.x, y_s, D)
            reports.append(_point_report("eblup", fit.total, {"fallback-syn"} if fit.fallback else ()))

    if args.format == "json":
        json.dump([_json_row(r.to_row()) for r in reports], sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.to_row().items()})
    return EXIT_OK


def _json_row(row):
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    workers = args.threads if args.threads is not None else config.workers
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    table = run_scenario(config, workers=workers)
    wall = time.perf_counter() - start
    (out / "mse.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "cells.csv").write_text(table.cells_to_csv(), encoding="utf-8")
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "workers": workers,
        "reference": config.reference_method,
        "kernel_backend": _kernels.BACKEND,
        "versions": {
            "hrsae": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "wall_time_s": round(wall, 3),
        "counts": table.counts(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out / 'mse.csv'} ({len(table.rows)} rows) in {wall:.1f}s")
    return EXIT_OK


def cmd_orderprobs(args) -> int:
    if args.R < 1:
        raise UsageError("--R must be at least 1")
    pop = load_population(args.pop)
    eta = fit_eta(pop.z, pop.x, args.variance_mode, args.error_law)
    P = mc_order_probs(eta, pop.z, args.R, args.seed, args.threads)
    save_order_probs(args.out, P, args.seed, model_hash(eta, pop.z))
    print(f"wrote {args.out}: N={P.n_units} R={P.replications} seed={args.seed} "
          f"alpha=({eta.alpha1:.6g}, {eta.alpha2:.6g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(args.cache)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}" + (f"  ({r.detail})" if r.detail else ""))
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hrsae", description="Hidden-randomness small-area estimation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads(p, default_help):
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker cap ({default_help}); changes the random-stream partition")

    def model_opts(p):
        p.add_argument("--variance-mode", choices=VARIANCE_MODES, default="pooled")
        p.add_argument("--error-law", choices=ERROR_LAWS, default="normal")

    p = sub.add_parser("estimate", help="estimate a domain total from one sample")
    p.add_argument("--pop", required=True, help="population CSV (columns z, x, optional id, y)")
    p.add_argument("--domain", required=True, help="domain id file (one per line) or inline list 1,2,3")
    p.add_argument("--sample", required=True, help="sample CSV with columns id, y")
    p.add_argument("--methods", default="hr,rhr", help=f"comma list from {','.join(ESTIMATE_METHODS)}")
    p.add_argument("--rho-xz", type=float, default=None, help="override the x-z correlation")
    p.add_argument("--theta-backend", choices=("montecarlo", "indicator"), default="montecarlo")
    p.add_argument("--orderprobs", default=None, help="precomputed order-probability cache")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--R", type=int, default=100_000, help="Monte-Carlo replications")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    model_opts(p)
    threads(p, f"default ${THREADS_ENV} or CPU count")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a simulation scenario")
    p.add_argument("config", help="scenario config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    threads(p, "default: config 'workers'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("orderprobs", help="precompute and cache order probabilities")
    p.add_argument("--pop", required=True)
    p.add_argument("--R", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    model_opts(p)
    threads(p, f"default ${THREADS_ENV} or CPU count")
    p.set_defaults(func=cmd_orderprobs)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--cache", default=None, help="also verify an order-probability cache")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("estimate", "orderprobs") and args.threads is None:
            args.threads = _default_threads()
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"hrsae: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateError, SizeLimitError) as exc:
        print(f"hrsae: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"hrsae: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"hrsae: file error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
