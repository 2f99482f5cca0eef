"""Dispatch an ``ExperimentConfig`` to the numeric modules and persist the result."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import density, moments, tail
from .config import CSV_COLUMNS, ExperimentConfig, ResultRecord
from .errors import ConfigError, InsufficientDataError, OutputIOError
from .matrices import EntryDistribution
from .rng import RNG_NAME, derive_stream

_U64 = (1 << 64) - 1

DEFAULT_TRIALS = 10_000
DEFAULT_TAIL_GRID = [1.0, 2.0, 4.0, 8.0]
DEFAULT_SMALLBALL_GRID = [0.125, 0.25, 0.5, 1.0]


def _need(cfg: ExperimentConfig, *names: str):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"{cfg.experiment}: missing required field(s): {', '.join(missing)}")


def _base_row(cfg: ExperimentConfig, **values):
    from . import __version__

    row = {c: None for c in CSV_COLUMNS}
    row.update(experiment=cfg.experiment, seed=cfg.seed, rng_name=RNG_NAME, version=__version__)
    row.update(values)
    return row


def _curve_rows(cfg, curve: tail.TailCurve):
    try:
        fit = tail.fit_log_slope(curve)
        slope, slope_se = fit.slope, fit.stderr
    except InsufficientDataError:
        slope = slope_se = None
    rows = [
        _base_row(cfg, n=curve.n, k=curve.k, t=float(t), p_hat=float(p), ci_low=float(lo),
                  ci_high=float(hi), trials=curve.trials, slope=slope, slope_stderr=slope_se)
        for t, p, lo, hi in zip(curve.t_grid, curve.p_hat, curve.ci_low, curve.ci_high)
    ]
    summary = {"statistic": curve.statistic.value, "direction": curve.direction.value,
               "discarded": curve.discarded, "slope": slope, "slope_stderr": slope_se}
    return rows, summary


def _run_tail(cfg, smallball: bool):
    _need(cfg, "n", "k")
    if smallball:
        statistic = cfg.statistic or tail.Statistic.SMIN_POWER.value
        direction = tail.Direction.LOWER_SMALLBALL
        grid = cfg.t_grid or DEFAULT_SMALLBALL_GRID
    else:
        statistic = cfg.statistic or tail.Statistic.HS_INVERSE_POWER.value
        direction = tail.Direction.UPPER_TAIL
        grid = cfg.t_grid or DEFAULT_TAIL_GRID
    curve = tail.estimate_tail_probability(statistic, direction, cfg.n, cfg.k, cfg.entry_dist,
                                           grid, cfg.trials or DEFAULT_TRIALS, cfg.seed)
    return _curve_rows(cfg, curve)


def _run_moments(cfg):
    _need(cfg, "k", "m")
    taus = cfg.taus or [1.0] * (cfg.n or 0)
    if not taus:
        raise ConfigError("moments: give taus or n")
    if cfg.n is not None and cfg.n != len(taus):
        raise ConfigError("moments: n does not match len(taus)")
    n = len(taus)
    pairs = [(cfg.i, cfg.j)] if cfg.i is not None and cfg.j is not None else \
        [(a, b) for a in range(n) for b in range(n)]
    rows = []
    for a, b in pairs:
        rep = moments.entry_moment_mc(taus, cfg.k, cfg.m, a, b, cfg.trials or DEFAULT_TRIALS,
                                      derive_stream(cfg.seed, 0), symmetrize=cfg.symmetrize)
        rows.append(_base_row(cfg, n=n, k=cfg.k, m=cfg.m, trials=rep.trials, estimate=rep.estimate,
                              std_error=rep.std_error, bound_value=rep.bound_value,
                              empirical_constant=rep.empirical_constant))
    return rows, {"pairs": [list(p) for p in pairs], "symmetrize": cfg.symmetrize}


def _run_identity(cfg):
    _need(cfg, "n", "k")
    trials = cfg.trials or DEFAULT_TRIALS
    direct = tail.sample_power_statistics(cfg.n, [cfg.k], trials, cfg.seed, route="direct")
    fact = tail.sample_power_statistics(cfg.n, [cfg.k], trials, (cfg.seed + 1) & _U64,
                                        route="factored")
    x = direct.hs_inv[cfg.k]
    y = fact.hs_inv[cfg.k]
    res = stats.ks_2samp(x[~np.isnan(x)], y[~np.isnan(y)])
    row = _base_row(cfg, n=cfg.n, k=cfg.k, trials=trials, ks_statistic=float(res.statistic),
                    ks_pvalue=float(res.pvalue))
    return [row], {"factored_seed": (cfg.seed + 1) & _U64}


def _run_density(cfg):
    _need(cfg, "n")
    trials = cfg.trials or DEFAULT_TRIALS
    est = density.normalizing_constant(cfg.n, trials, derive_stream(cfg.seed, 0))
    exact = density.normalizing_constant_quadrature(cfg.n)
    tv = None
    if cfg.n == 2:
        lam = density.sample_eigenvalues(2, trials, derive_stream(cfg.seed, 1))
        tv = density.histogram_tv_distance_2d(lam, np.linspace(0, 20, 51), np.linspace(0, 3, 51))
    row = _base_row(cfg, n=cfg.n, trials=trials, estimate=est.value, std_error=est.std_error,
                    bound_value=exact, tv_distance=tv)
    return [row], {"quadrature_constant": exact}


def _run_hs_comparison(cfg):
    _need(cfg, "n", "k")
    res = tail.hs_comparison_ratio(cfg.n, cfg.k, cfg.outer_trials or 100, cfg.inner_trials or 1000,
                                   cfg.seed)
    rows = [_base_row(cfg, n=cfg.n, k=cfg.k, trials=cfg.inner_trials or 1000, estimate=float(r))
            for r in res.ratios]
    summary = {"max_ratio": float(np.max(res.ratios)) if res.ratios.size else None,
               "discarded": res.discarded, "discard_rate": res.discard_rate}
    return rows, summary


def _run_scan(cfg):
    _need(cfg, "k", "taus")
    i = cfg.i or 0
    tau_i = cfg.taus[i]
    grid = cfg.s_grid or list(np.linspace(tau_i / 2, tau_i, 16))
    res = moments.diagonal_perturbation_scan(cfg.taus, i, cfg.k, grid, cfg.trials or DEFAULT_TRIALS,
                                             derive_stream(cfg.seed, 0), c=cfg.threshold_c)
    rows = [_base_row(cfg, n=len(cfg.taus), k=cfg.k, m=2, trials=res.trials, s=float(s),
                      estimate=float(e), std_error=float(se))
            for s, e, se in zip(res.s, res.estimates, res.std_errors)]
    summary = {"exceed_fraction": res.exceed_fraction, "c_used": res.c_used,
               "c_measured": res.c_measured, "threshold": res.threshold,
               "leading_coefficient": res.leading_coefficient,
               "leading_coefficient_se": res.leading_coefficient_se,
               "haar_moment": moments.haar_projection_moment(len(cfg.taus), 2 * cfg.k)}
    return rows, summary


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    """Compute the record for ``cfg``; nothing is written."""
    start = time.perf_counter()
    EntryDistribution.parse(cfg.entry_dist)
    handlers = {
        "tail": lambda: _run_tail(cfg, smallball=False),
        "smallball": lambda: _run_tail(cfg, smallball=True),
        "moments": lambda: _run_moments(cfg),
        "identity": lambda: _run_identity(cfg),
        "density": lambda: _run_density(cfg),
        "hs_comparison": lambda: _run_hs_comparison(cfg),
        "perturbation_scan": lambda: _run_scan(cfg),
    }
    rows, summary = handlers[cfg.experiment]()
    return ResultRecord(cfg.experiment, rows, cfg.fingerprint(), json.loads(cfg.canonical_json()),
                        summary, wall_time_seconds=time.perf_counter() - start)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def record_to_csv(record: ResultRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in record.rows:
        writer.writerow([format_value(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def record_to_json(record: ResultRecord) -> str:
    return json.dumps(record.to_json_dict(), indent=2, sort_keys=True) + "\n"


def output_paths(base: str | os.PathLike) -> tuple[Path, Path]:
    path = Path(base)
    if path.suffix in (".json", ".csv"):
        path = path.with_suffix("")
    return path.with_name(path.name + ".json"), path.with_name(path.name + ".csv")


def write_text(path: Path, text: str, overwrite: bool):
    if path.exists() and not overwrite:
        raise OutputIOError(f"{path} exists; pass --overwrite to replace it")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputIOError(f"cannot write {path}: {exc}") from exc


def write_record(record: ResultRecord, base, overwrite: bool = False) -> tuple[Path, Path]:
    json_path, csv_path = output_paths(base)
    if not overwrite:
        for p in (json_path, csv_path):
            if p.exists():
                raise OutputIOError(f"{p} exists; pass --overwrite to replace it")
    write_text(json_path, record_to_json(record), overwrite=True)
    write_text(csv_path, record_to_csv(record), overwrite=True)
    return json_path, csv_path
