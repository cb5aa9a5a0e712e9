"""Command line entry point: ``bp-mud detect|sweep|tstar|spectral``.

Exit codes: 0 on success, 1 on configuration errors, 2 when a detector
raised (the sweep still completes and records the failure per row).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

import numpy as np

from . import approx_bp, bp_core, fixedpoint, harness, spectral
from .errors import ParameterError
from .sysmodel import generate_instance

EXIT_OK, EXIT_CONFIG, EXIT_DETECTOR = 0, 1, 2


def _write_rows(rows, fh, columns):
    w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def cmd_detect(args) -> int:
    try:
        inst = generate_instance(args.users, args.chips, args.dist, args.sigma, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        oracle = spectral.mmse_solve(inst)
    except ArithmeticError:
        oracle = None
    ref = None if oracle is None else oracle.mean
    try:
        if args.detector in ("bp", "abp"):
            runner = bp_core.run_bp if args.detector == "bp" else approx_bp.run_abp
            rep = runner(inst, tol=args.tol, t_max=args.max_iters, reference=ref)
            x_hat, iters, converged = rep.x_hat, rep.iterations_used, rep.converged
            history = rep.history_rows()
        elif args.detector == "mmse":
            if oracle is None:
                raise ArithmeticError("MMSE system is singular")
            x_hat, iters, converged, history = ref, 0, True, []
        else:
            x_hat, iters, converged, history = harness.normalized_matched_filter(inst), 0, True, []
    except (ArithmeticError, ValueError) as exc:
        print(f"detector error: {exc}", file=sys.stderr)
        return EXIT_DETECTOR
    mse = float(np.mean((x_hat - inst.symbols) ** 2))
    dist = math.nan if ref is None else float(np.linalg.norm(x_hat - ref) / math.sqrt(inst.K))
    print(f"detector={args.detector} K={inst.K} N={inst.N} sigma={inst.sigma} seed={args.seed}")
    print(f"iterations={iters} converged={converged} mse={mse:.6g} dist_to_mmse={dist:.3g}")
    if args.history:
        with open(args.history, "w", newline="") as fh:
            _write_rows([{"iter": i, "mse": m, "dist_to_mmse": d} for i, m, d in history], fh,
                        ["iter", "mse", "dist_to_mmse"])
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = harness.ExperimentConfig.load(args.config)
        if args.out:
            cfg.output_path = args.out
        if args.workers is not None:
            cfg.workers = args.workers
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = harness.run_experiment(cfg)
    summary = harness.summarize(result)
    cols = ["detector", "sigma", "trials", "errors", "median_final_mse", "median_final_mse_posterior",
            "median_iterations", "contraction", "t_star_empirical", "t_star_theory", "theoretical_mse"]
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            _write_rows(summary, fh, cols)
    else:
        _write_rows(summary, sys.stdout, cols)
    return EXIT_DETECTOR if result.error_rows else EXIT_OK


def _read_grid(path):
    with open(path, newline="") as fh:
        return [(float(r["alpha"]), float(r["sigma"])) for r in csv.DictReader(fh)]


def cmd_tstar(args) -> int:
    try:
        points = _read_grid(args.grid) if args.grid else [(a, s) for a in args.alpha for s in args.sigma]
        rows = [fixedpoint.fixed_point_report(a, s).as_row() for a, s in points]
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_rows(rows, sys.stdout, ["alpha", "sigma", "Lambda", "t_star", "asymptotic_mse"])
    return EXIT_OK


def cmd_spectral(args) -> int:
    K, N = args.users, args.chips
    trace_ts = [int(t) for t in args.trace_t.split(",") if t] if K * N <= spectral.MAX_DENSE_DIM else []
    rows = []
    status = EXIT_OK
    for j in range(args.trials):
        seed = args.seed + j
        inst = generate_instance(K, N, sigma=args.sigma, seed=seed)
        row = {"seed": seed}
        row["growth_rate_normalized"] = spectral.spectral_growth_rate(
            inst.signatures, args.sigma, iters=args.iters, seed=seed).normalized
        try:
            rep = bp_core.run_bp(inst, t_max=args.max_iters)
            if rep.converged:
                row["D"] = spectral.discrepancy_D(inst, rep, spectral.mmse_solve(inst)).D
            else:
                row["D"] = math.nan
        except ArithmeticError:
            row["D"] = math.nan
            status = EXIT_DETECTOR
        scale = lambda t: float(N) ** (2 * t + 2) * (K / N) ** (t + 1)  # noqa: E731
        for t in trace_ts:
            row[f"trace_ratio_t{t}"] = spectral.omega_power_trace(inst.signatures, t) / scale(t)
        rows.append(row)
    cols = ["seed", "growth_rate_normalized", "D"] + [f"trace_ratio_t{t}" for t in trace_ts]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _write_rows(rows, fh, cols)
    else:
        _write_rows(rows, sys.stdout, cols)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bp-mud", description="BP multi-user detection experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run one detector on one random instance")
    d.add_argument("--detector", choices=harness.DETECTORS, default="bp")
    d.add_argument("--users", "-K", type=int, required=True)
    d.add_argument("--chips", "-N", type=int, required=True)
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--tol", type=float, default=bp_core.DEFAULT_TOL)
    d.add_argument("--max-iters", type=int, default=None)
    d.add_argument("--dist", choices=["binary", "gaussian"], default="binary")
    d.add_argument("--history", help="write iter,mse,dist_to_mmse CSV here")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("sweep", help="run a configured detector comparison")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="per-iteration results CSV (a .json sidecar is written next to it)")
    s.add_argument("--summary", help="write the per-(detector, sigma) summary here instead of stdout")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("tstar", help="fixed point and t* table")
    t.add_argument("--alpha", type=float, nargs="+", default=[0.5, 1.0])
    t.add_argument("--sigma", type=float, nargs="+", default=[0.1, 0.2, 0.4, 0.8])
    t.add_argument("--grid", help="CSV file with alpha,sigma columns")
    t.set_defaults(func=cmd_tstar)

    g = sub.add_parser("spectral", help="per-trial Omega growth rate, D statistic and trace ratios")
    g.add_argument("--users", "-K", type=int, required=True)
    g.add_argument("--chips", "-N", type=int, required=True)
    g.add_argument("--sigma", type=float, required=True)
    g.add_argument("--trials", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--iters", type=int, default=100)
    g.add_argument("--max-iters", type=int, default=2000)
    g.add_argument("--trace-t", default="1,2", help="comma-separated powers for the trace ratio")
    g.add_argument("--out")
    g.set_defaults(func=cmd_spectral)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
