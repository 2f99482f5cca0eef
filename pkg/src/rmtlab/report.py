"""Re-emit stored result records as CSV, JSON or an SVG plot."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import CSV_COLUMNS, INT_COLUMNS, STR_COLUMNS, ResultRecord
from .errors import ConfigError, InsufficientDataError, MalformedRecordError, OutputIOError
from .runner import record_to_csv, record_to_json, write_text
from .tail import Direction, Statistic, TailCurve, fit_log_slope

FORMATS = ("csv", "json", "svg")


def _parse_cell(column: str, text: str):
    if text == "":
        return None
    if column in STR_COLUMNS:
        return text
    if column in INT_COLUMNS:
        return int(text)
    return float(text)


def read_record(path) -> ResultRecord:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedRecordError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".csv":
            reader = csv.DictReader(text.splitlines())
            if reader.fieldnames is None or "experiment" not in reader.fieldnames:
                raise MalformedRecordError(f"{path}: missing CSV header")
            rows = []
            for raw in reader:
                row = {c: None for c in CSV_COLUMNS}
                for c in CSV_COLUMNS:
                    if c in raw and raw[c] is not None:
                        row[c] = _parse_cell(c, raw[c])
                rows.append(row)
            experiment = rows[0]["experiment"] if rows else None
            record = ResultRecord(experiment, rows)
            if rows:
                record.version = rows[0]["version"]
                record.rng_name = rows[0]["rng_name"]
            return record
        data = json.loads(text)
        if not isinstance(data, dict) or not isinstance(data.get("rows"), list):
            raise MalformedRecordError(f"{path}: not a result record")
        rows = [{c: r.get(c) for c in CSV_COLUMNS} for r in data["rows"]]
        return ResultRecord(data.get("experiment"), rows, data.get("fingerprint"), data.get("config"),
                            data.get("summary") or {}, data.get("version"), data.get("rng_name"))
    except MalformedRecordError:
        raise
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise MalformedRecordError(f"{path}: {exc}") from exc


def curve_from_rows(rows) -> TailCurve:
    pts = [r for r in rows if r.get("t") is not None and r.get("p_hat") is not None]
    if not pts:
        raise MalformedRecordError("record has no tail-curve rows")
    t = np.array([r["t"] for r in pts], dtype=float)
    p = np.array([r["p_hat"] for r in pts], dtype=float)
    lo = np.array([r["ci_low"] if r["ci_low"] is not None else r["p_hat"] for r in pts], dtype=float)
    hi = np.array([r["ci_high"] if r["ci_high"] is not None else r["p_hat"] for r in pts], dtype=float)
    trials = int(pts[0]["trials"] or 0)
    direction = Direction.LOWER_SMALLBALL if np.all(t <= 1) else Direction.UPPER_TAIL
    statistic = Statistic.SMIN_POWER if direction is Direction.LOWER_SMALLBALL else Statistic.HS_INVERSE_POWER
    return TailCurve(statistic, direction, int(pts[0]["n"] or 0), int(pts[0]["k"] or 1), "gaussian",
                     t, p, lo, hi, trials, int(pts[0]["seed"] or 0))


def refit_slope(record: ResultRecord) -> ResultRecord:
    """Fill the slope columns of a tail record from its own points."""
    fit = fit_log_slope(curve_from_rows(record.rows))
    for row in record.rows:
        if row.get("t") is not None:
            row["slope"] = fit.slope
            row["slope_stderr"] = fit.stderr
    record.summary = dict(record.summary, slope=fit.slope, slope_stderr=fit.stderr,
                          r_squared=fit.r_squared)
    return record


def render_svg(record: ResultRecord) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = record.rows
    if not rows:
        raise MalformedRecordError("record has no rows")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if any(r.get("t") is not None and r.get("p_hat") is not None for r in rows):
        curve = curve_from_rows(rows)
        slope = rows[0].get("slope")
        if slope is None:
            try:
                slope = fit_log_slope(curve).slope
            except InsufficientDataError:
                slope = None
        yerr = np.vstack([curve.p_hat - curve.ci_low, curve.ci_high - curve.p_hat])
        ax.errorbar(curve.t_grid, curve.p_hat, yerr=yerr, fmt="o-", capsize=3)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("estimated probability")
        label = f"slope={slope:.2f}" if slope is not None else "slope=n/a"
        ax.text(0.05, 0.92, label, transform=ax.transAxes)
        ax.set_title(f"{record.experiment}: n={curve.n}, k={curve.k}")
    elif any(r.get("s") is not None for r in rows):
        s = np.array([r["s"] for r in rows], dtype=float)
        e = np.array([r["estimate"] for r in rows], dtype=float)
        se = np.array([r["std_error"] or 0.0 for r in rows], dtype=float)
        ax.errorbar(s, e, yerr=se, fmt="o-", capsize=3)
        ax.set_xlabel("s")
        ax.set_ylabel("second moment")
        ax.set_title(f"{record.experiment}")
    else:
        plt.close(fig)
        raise ConfigError(f"no plot defined for experiment {record.experiment!r}")
    import io

    buf = io.StringIO()
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "rmtlab"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def emit_report(record_path, fmt: str, out=None, overwrite: bool = False) -> Path:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r} (expected one of {', '.join(FORMATS)})")
    record = read_record(record_path)
    if fmt == "svg":
        text = render_svg(record)
    elif fmt == "csv":
        text = record_to_csv(record)
    else:
        text = record_to_json(record)
    target = Path(out) if out else Path(record_path).with_suffix("." + fmt)
    if target.resolve() == Path(record_path).resolve():
        raise OutputIOError("refusing to overwrite the input record")
    write_text(target, text, overwrite)
    return target
