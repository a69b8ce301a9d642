"""CSV and JSON serialization of benchmark results.

Every float goes out with 17 significant digits, enough to round-trip a
float64. Non-finite values become empty CSV cells and JSON ``null``.
``report.json`` carries no wall-clock measurements, so a fixed seed gives a
byte-identical file; measured timings live in ``complexity.csv`` only. The
worker count and output directory are left out of the embedded config for the
same reason.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import numpy as np

from .harness import PR_GRID, ROC_GRID, BenchReport, complexity_report

REPORT_FORMAT = "graph-wpt-hos/bench-report"
REPORT_VERSION = 1

SUMMARY_COLUMNS = ("variant", "regime", "metric", "mean", "median", "p5", "p95")
CURVE_COLUMNS = ("variant", "regime", "trial", "x", "y")
LATENCY_COLUMNS = ("variant", "regime", "trial", "stream", "latency_frames", "detected")
# settings that change how a run executes but not what it computes
EXECUTION_KEYS = ("jobs", "output_dir")
TRIAL_METRICS = ("roc_auc", "pr_auc", "precision", "recall", "f1", "threshold", "false_alarm_rate")

_num = {"type": ["number", "null"]}
_str = {"type": "string"}
_int = {"type": "integer"}


def _rows_of(props: dict[str, Any]) -> dict[str, Any]:
    return {
        "type": "array",
        "items": {"type": "object", "required": sorted(props), "properties": props},
    }


REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format", "version", "master_seed", "partial", "error", "config",
                 "summary", "trials", "roc_points", "pr_points", "curve_bands", "latency", "complexity"],
    "properties": {
        "format": {"const": REPORT_FORMAT},
        "version": {"const": REPORT_VERSION},
        "master_seed": _int,
        "partial": {"type": "boolean"},
        "error": {"type": ["string", "null"]},
        "config": {"type": "object"},
        "summary": _rows_of({
            "variant": _str, "regime": _str, "metric": _str, "mean": _num, "median": _num,
            "p5": _num, "p25": _num, "p75": _num, "p95": _num, "n": _int,
        }),
        "trials": _rows_of({
            "variant": _str, "regime": _str, "trial": _int, "latency": {"type": "object"},
            **{m: _num for m in TRIAL_METRICS},
        }),
        "roc_points": _rows_of({"variant": _str, "regime": _str, "trial": _int, "x": _num, "y": _num}),
        "pr_points": _rows_of({"variant": _str, "regime": _str, "trial": _int, "x": _num, "y": _num}),
        "curve_bands": _rows_of({
            "curve": {"enum": ["roc", "pr"]}, "variant": _str, "regime": _str,
            "x": _num, "p5": _num, "median": _num, "p95": _num,
        }),
        "latency": _rows_of({
            "variant": _str, "regime": _str, "trial": _int, "stream": _int,
            "latency_frames": {"type": ["integer", "null"]}, "detected": {"type": "boolean"},
        }),
        "complexity": {"type": "array", "items": {"type": "object"}},
    },
}


def fmt_float(x: float) -> str:
    return format(float(x), ".17g") if math.isfinite(x) else ""


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    return str(v)


def to_json(obj: Any) -> str:
    """Deterministic JSON text with 17-digit floats and sorted keys."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj)) or "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{to_json(str(k))}:{to_json(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_text(columns: Iterable[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = list(columns)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


# --------------------------------------------------------------------------- tables


def summary_rows(report: BenchReport) -> list[dict]:
    return report.metric_table()


def trial_rows(report: BenchReport) -> list[dict]:
    rows = []
    for r_idx, regime in enumerate(report.config.regimes):
        for kind in report.config.variants:
            for t, res in enumerate(report.trials):
                v = res[r_idx].variants[kind]
                rows.append({
                    "variant": kind, "regime": regime, "trial": t,
                    **{m: getattr(v, m) for m in TRIAL_METRICS},
                    "latency": v.latency.to_dict(),
                })
    return rows


def curve_rows(report: BenchReport, curve: str) -> list[dict]:
    grid = ROC_GRID if curve == "roc" else PR_GRID
    attr = "roc_curve" if curve == "roc" else "pr_curve"
    rows = []
    for r_idx, regime in enumerate(report.config.regimes):
        for kind in report.config.variants:
            for t, res in enumerate(report.trials):
                ys = getattr(res[r_idx].variants[kind], attr)
                rows.extend(
                    {"variant": kind, "regime": regime, "trial": t, "x": float(x), "y": float(y)}
                    for x, y in zip(grid, ys)
                )
    return rows


def band_rows(report: BenchReport) -> list[dict]:
    """5th/50th/95th percentile of each curve across trials, per grid point."""
    rows = []
    for curve, grid, attr in (("roc", ROC_GRID, "roc_curve"), ("pr", PR_GRID, "pr_curve")):
        for kind, regime, vals in report.cells():
            if not vals:
                continue
            stack = np.array([getattr(v, attr) for v in vals])
            p5, med, p95 = np.percentile(stack, [5, 50, 95], axis=0)
            rows.extend(
                {"curve": curve, "variant": kind, "regime": regime, "x": float(x),
                 "p5": float(a), "median": float(b), "p95": float(c)}
                for x, a, b, c in zip(grid, p5, med, p95)
            )
    return rows


def latency_rows(report: BenchReport) -> list[dict]:
    horizon = report.config.stream_horizon
    rows = []
    for r_idx, regime in enumerate(report.config.regimes):
        for kind in report.config.variants:
            for t, res in enumerate(report.trials):
                for s, lat in enumerate(res[r_idx].variants[kind].latencies):
                    hit = lat is not None and lat < horizon
                    rows.append({
                        "variant": kind, "regime": regime, "trial": t, "stream": s,
                        "latency_frames": int(lat) if hit else None, "detected": hit,
                    })
    return rows


def report_document(report: BenchReport) -> dict[str, Any]:
    cfg = report.config
    complexity = [{k: v for k, v in row.items() if k != "wall_seconds_per_window"} for row in report.complexity]
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "master_seed": cfg.master_seed,
        "partial": report.partial,
        "error": report.error,
        "config": {k: v for k, v in cfg.to_dict().items() if k not in EXECUTION_KEYS},
        "summary": summary_rows(report),
        "trials": trial_rows(report),
        "roc_points": curve_rows(report, "roc"),
        "pr_points": curve_rows(report, "pr"),
        "curve_bands": band_rows(report),
        "latency": latency_rows(report),
        "complexity": complexity,
    }


def report_json(report: BenchReport) -> str:
    text = to_json(report_document(report)) + "\n"
    validate_report_text(text)
    return text


def validate_report_text(text: str) -> None:
    """Raise ``jsonschema.ValidationError`` when the document breaks the schema."""
    jsonschema.validate(json.loads(text), REPORT_SCHEMA)


def write_outputs(report: BenchReport, out_dir: str | Path, time_windows: int = 32) -> dict[str, Path]:
    """Write every CSV plus ``report.json``; returns the paths by name.

    ``time_windows`` controls the wall-clock measurement in ``complexity.csv``
    (0 skips it).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timed = complexity_report(report.config, time_windows=time_windows)
    comp_cols = list(timed[0]) if timed else []
    files = {
        "bench_summary.csv": csv_text(SUMMARY_COLUMNS, summary_rows(report)),
        "roc_points.csv": csv_text(CURVE_COLUMNS, curve_rows(report, "roc")),
        "pr_points.csv": csv_text(CURVE_COLUMNS, curve_rows(report, "pr")),
        "latency.csv": csv_text(LATENCY_COLUMNS, latency_rows(report)),
        "complexity.csv": csv_text(comp_cols, timed),
        "report.json": report_json(report),
    }
    paths = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        paths[name] = path
    return paths
