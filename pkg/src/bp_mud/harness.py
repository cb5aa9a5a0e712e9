"""Detector comparison sweeps and their CSV/JSON reporting.

Trial ``j`` uses instance seed ``base_seed + j``; every sigma in the sweep
reuses that seed, so the signatures, symbols and unit noise draw are shared
and only the noise scale changes.

The matched-filter estimate is the raw statistic (1/sqrt(N)) S^T y scaled by
1 / (1 + sigma^2 + (K-1)/N), the per-user scalar MMSE gain. This equals BP's
iteration-1 estimate for +/-1 signatures.

Besides the squared error against the transmitted symbols (``mse``), each row
carries ``mse_posterior``: the error expected given the received vector,

    E[ |x_hat - x|^2 / K | y ] = mean_i v_i + |x_hat - x_mmse|^2 / K,

with v_i the exact posterior variances. Every detector here is a function of
y, so the cross term vanishes; the column is free of symbol/noise sampling
noise and is the one to use for curve-shape comparisons.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, approx_bp, bp_core, fixedpoint
from .errors import ParameterError
from .spectral import mmse_solve
from .sysmodel import SignatureDistribution, SystemInstance, generate_instance, matched_filter

log = logging.getLogger(__name__)

DETECTORS = ("matched", "mmse", "bp", "abp")
COLUMNS = ("trial", "seed", "detector", "sigma", "iter", "mse", "mse_posterior", "dist_to_mmse", "dist_to_final",
           "converged", "error", "wall_time")
HISTORY_COLUMNS = ("iter", "mse", "dist_to_mmse", "mse_posterior", "dist_to_final")
WORKERS_ENV = "BP_MUD_WORKERS"

theoretical_mse = fixedpoint.theoretical_mse


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    K: int
    N: int
    sigma_list: list = field(default_factory=lambda: [0.1, 0.2, 0.4, 0.8])
    detectors: list = field(default_factory=lambda: ["matched", "mmse", "bp", "abp"])
    trials: int = 1
    base_seed: int = 0
    max_iters: int = 1000
    tol: float = 1e-10
    output_path: str | None = None
    distribution: str = "binary"
    workers: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.detectors:
            raise ConfigError("detectors must be non-empty")
        bad = set(self.detectors) - set(DETECTORS)
        if bad:
            raise ConfigError(f"unknown detectors {sorted(bad)}; choose from {DETECTORS}")
        if self.K < 1 or self.N < 1:
            raise ConfigError("K and N must be >= 1")
        if not self.sigma_list or min(self.sigma_list) < 0:
            raise ConfigError("sigma_list must be non-empty and non-negative")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        SignatureDistribution(self.distribution)

    @property
    def alpha(self) -> float:
        return self.K / self.N

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "K" not in d and "alpha" in d:
            d["K"] = int(round(d.pop("alpha") * d["N"]))
        d.pop("alpha", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list

    @property
    def error_rows(self):
        return [r for r in self.rows if r["error"]]

    def select(self, detector=None, sigma=None, trial=None):
        return [r for r in self.rows
                if (detector is None or r["detector"] == detector)
                and (sigma is None or r["sigma"] == sigma)
                and (trial is None or r["trial"] == trial)]

    def histories(self, detector, sigma):
        """Per-trial arrays for one detector and sigma.

        Columns follow ``HISTORY_COLUMNS``: iter, mse, dist_to_mmse,
        mse_posterior, dist_to_final.
        """
        out = {}
        for r in self.select(detector, sigma):
            if r["error"]:
                continue
            out.setdefault(r["trial"], []).append(tuple(r[c] for c in HISTORY_COLUMNS))
        return {t: np.array(sorted(v)) for t, v in sorted(out.items())}

    def write_csv(self, path, include_wall_time=True):
        cols = [c for c in COLUMNS if include_wall_time or c != "wall_time"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        sidecar = Path(str(path) + ".json")
        sidecar.write_text(json.dumps({"config": asdict(self.config), "version": __version__}, indent=2))


def normalized_matched_filter(instance: SystemInstance) -> np.ndarray:
    gain = 1.0 + instance.sigma**2 + (instance.K - 1) / instance.N
    return matched_filter(instance) / gain


def _row(trial, seed, detector, sigma, it, mse, dist, converged, error="", wall=0.0, vbar=math.nan,
         to_final=0.0):
    return {"trial": trial, "seed": seed, "detector": detector, "sigma": float(sigma), "iter": int(it),
            "mse": float(mse), "mse_posterior": float(vbar + dist**2), "dist_to_mmse": float(dist),
            "dist_to_final": float(to_final), "converged": bool(converged), "error": error, "wall_time": wall}


def _run_trial(config: ExperimentConfig, trial: int) -> list:
    seed = config.base_seed + trial
    rows = []
    for sigma in config.sigma_list:
        inst = generate_instance(config.K, config.N, config.distribution, sigma, seed)
        x = inst.symbols
        ref, vbar = None, math.nan
        try:
            oracle = mmse_solve(inst)
            ref, vbar = oracle.mean, float(np.mean(oracle.variance_diag))
        except ArithmeticError as exc:
            log.warning("trial %d sigma %g: MMSE oracle failed: %s", trial, sigma, exc)
        for det in config.detectors:
            t0 = time.perf_counter()
            try:
                if det in ("bp", "abp"):
                    runner = bp_core.run_bp if det == "bp" else approx_bp.run_abp
                    rep = runner(inst, tol=config.tol, t_max=config.max_iters, reference=ref)
                    wall = time.perf_counter() - t0
                    dists = rep.dist_to_reference or [math.nan] * len(rep.mse)
                    for it, mse, dist, fin in zip(rep.history_iters, rep.mse, dists, rep.dist_to_final):
                        rows.append(_row(trial, seed, det, sigma, it, mse, dist, rep.converged, wall=wall,
                                         vbar=vbar, to_final=fin))
                    continue
                if det == "mmse":
                    if ref is None:
                        raise ArithmeticError("MMSE system singular")
                    est, dist = ref, 0.0
                else:
                    est = normalized_matched_filter(inst)
                    dist = math.nan if ref is None else float(np.linalg.norm(est - ref) / math.sqrt(inst.K))
                rows.append(_row(trial, seed, det, sigma, 0, np.mean((est - x) ** 2), dist, True,
                                 wall=time.perf_counter() - t0, vbar=vbar))
            except (ArithmeticError, ValueError) as exc:
                log.warning("trial %d sigma %g detector %s failed: %s", trial, sigma, det, exc)
                rows.append(_row(trial, seed, det, sigma, 0, math.nan, math.nan, False,
                                 error=f"{type(exc).__name__}: {exc}", wall=time.perf_counter() - t0))
    return rows


def _resolve_workers(config):
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def run_experiment(config: ExperimentConfig) -> SweepResult:
    workers = _resolve_workers(config)
    trials = range(config.trials)
    if workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_trial, [config] * config.trials, trials))
    else:
        chunks = [_run_trial(config, t) for t in trials]
    order = {d: i for i, d in enumerate(DETECTORS)}
    rows = sorted((r for c in chunks for r in c),
                  key=lambda r: (r["trial"], r["sigma"], order[r["detector"]], r["iter"]))
    result = SweepResult(config, rows)
    if config.output_path:
        result.write_csv(config.output_path)
    return result


def fit_contraction(dist, skip: int = 2, floor: float = 1e-10) -> float:
    """Per-iteration contraction factor from a distance-to-fixed-point history.

    Least-squares slope of log(dist) over the entries after the first
    ``skip`` whose distance is still above ``floor``; returns exp(slope),
    or nan with fewer than three usable points.
    """
    d = np.asarray(dist, dtype=float)
    t = np.arange(len(d))
    keep = (t >= skip) & np.isfinite(d) & (d > floor)
    if keep.sum() < 3:
        return math.nan
    slope = np.polyfit(t[keep], np.log(d[keep]), 1)[0]
    return float(np.exp(slope))


def median_curve(histories: dict, column="mse", length: int | None = None) -> np.ndarray:
    """Ensemble median of a history column, padding each trial with its last value."""
    if isinstance(column, str):
        column = HISTORY_COLUMNS.index(column)
    if not histories:
        return np.array([])
    length = length or max(len(h) for h in histories.values())
    padded = np.array([np.concatenate([h[:, column], np.full(length - len(h), h[-1, column])])
                       for h in histories.values()])
    return np.median(padded, axis=0)


def summarize(result: SweepResult) -> list:
    """One row per (detector, sigma) with medians and the fitted convergence rate.

    The contraction is fitted on each trial's distance to its own final
    estimate, then the median over trials is taken.
    """
    cfg = result.config
    out = []
    for det in [d for d in DETECTORS if d in cfg.detectors]:
        for sigma in cfg.sigma_list:
            hist = result.histories(det, sigma)
            errors = len([r for r in result.select(det, sigma) if r["error"]])
            finals = [h[-1, 1] for h in hist.values()]
            finals_post = [h[-1, 3] for h in hist.values()]
            try:
                ts_theory = fixedpoint.t_star(cfg.alpha, sigma)
            except ParameterError:
                ts_theory = math.nan
            iters, rate = math.nan, math.nan
            if det in ("bp", "abp") and hist:
                iters = float(np.median([h[-1, 0] for h in hist.values()]))
                rates = [fit_contraction(h[:, 4]) for h in hist.values()]
                rates = [r for r in rates if np.isfinite(r)]
                rate = float(np.median(rates)) if rates else math.nan
            elif det in ("mmse", "matched"):
                iters = 0.0
            ts_emp = -1.0 / math.log(rate) if 0 < rate < 1 else math.nan
            out.append({
                "detector": det,
                "sigma": sigma,
                "trials": len(hist),
                "errors": errors,
                "median_final_mse": float(np.median(finals)) if finals else math.nan,
                "median_final_mse_posterior": float(np.median(finals_post)) if finals else math.nan,
                "median_iterations": iters,
                "contraction": rate,
                "t_star_empirical": ts_emp,
                "t_star_theory": ts_theory,
                "theoretical_mse": theoretical_mse(cfg.alpha, sigma) if sigma > 0 else math.nan,
            })
    return out
