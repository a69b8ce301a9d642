"""Command-line entry point: ``graph-wpt-hos {simulate,calibrate,detect,bench}``.

Every command reads an optional YAML config, then applies flag overrides
(flags win). Exit codes: 0 success, 2 configuration error, 3 runtime error.
Errors are reported as one line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import report as report_io
from .config import REGIME_PRESETS, ConfigError, RunConfig, dump_config, load_config
from .graph_spectral import SensorGraph, load_graph, save_graph, spectrum_of
from .harness import all_variant_features, run_benchmark, simulate_dataset
from .scoring import fit_nominal, load_model, run_detector, save_model

PROG = "graph-wpt-hos"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
WINDOW_FILES = ("calibration", "test_nominal", "test_anomalous", "anomalous_onsets", "stream")


def _split(value: str | None) -> tuple[str, ...] | None:
    if value is None:
        return None
    return tuple(v.strip() for v in value.split(",") if v.strip())


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.regime is not None:
        changes["regimes"] = _split(args.regime)
    if args.variant is not None:
        changes["variants"] = _split(args.variant)
    if getattr(args, "out", None) and args.command == "bench":
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def graph_fingerprint(graph: SensorGraph) -> str:
    text = "\n".join(f"{i} {j} {float(graph.adjacency[i, j])!r}" for i, j in graph.edges)
    return hashlib.sha256(f"M {graph.node_count}\n{text}".encode()).hexdigest()


def _load_windows(path: str) -> np.ndarray:
    try:
        arr = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read windows from {path}: {exc}") from exc
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{path}: expected windows shaped (N, M, L), got {arr.shape}")
    return arr


def _graph_for(args: argparse.Namespace, variant: str) -> SensorGraph | None:
    if args.graph_file is None:
        if variant == "GraphWptHos":
            raise ConfigError("--graph-file is required for the GraphWptHos variant")
        return None
    return load_graph(args.graph_file)


def _one_variant(cfg: RunConfig, args: argparse.Namespace) -> str:
    if args.variant is None:
        return "GraphWptHos"
    if len(cfg.variants) != 1:
        raise ConfigError("--variant takes a single variant for this command")
    return cfg.variants[0]


# --------------------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = Path(args.out or "sim_out")
    regime_name = cfg.regimes[0] if args.regime is not None else "A"
    if args.regime is not None and len(cfg.regimes) != 1:
        raise ConfigError("simulate takes a single --regime")
    regime = REGIME_PRESETS[regime_name]
    fixed_graph = load_graph(args.graph_file) if args.graph_file else None
    if fixed_graph is not None:
        cfg = cfg.replace(node_count=fixed_graph.node_count)
    out.mkdir(parents=True, exist_ok=True)
    trials = []
    for t in range(cfg.trials):
        data = simulate_dataset(cfg, t, regime, graph=fixed_graph, streams=args.streams)
        tdir = out / f"trial_{t:03d}"
        tdir.mkdir(exist_ok=True)
        files = {}
        for name in WINDOW_FILES:
            np.save(tdir / f"{name}.npy", data[name])
            files[name] = {"file": f"{tdir.name}/{name}.npy", "shape": list(data[name].shape)}
        save_graph(data["graph"], tdir / "graph.txt")
        files["graph"] = {"file": f"{tdir.name}/graph.txt", "shape": [data["graph"].node_count]}
        trials.append({
            "trial": t,
            "single_sensor": data["single_sensor"],
            "graph_sha256": graph_fingerprint(data["graph"]),
            "files": files,
        })
    manifest = {
        "format": "graph-wpt-hos/simulation",
        "master_seed": cfg.master_seed,
        "regime": regime_name,
        "stream_onset": cfg.stream_onset,
        "config": cfg.to_dict(),
        "trials": trials,
    }
    (out / "manifest.json").write_text(report_io.to_json(manifest) + "\n")
    print(f"wrote {len(trials)} trial(s) to {out}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args: argparse.Namespace) -> int:
    variant = _one_variant(cfg, args)
    windows = _load_windows(args.windows)
    n, m, length = windows.shape
    if n < 2:
        raise ValueError(f"calibration needs at least 2 windows, got {n}")
    graph = _graph_for(args, variant)
    if graph is not None and graph.node_count != m:
        raise ValueError(f"graph has {graph.node_count} nodes but windows have {m} rows")
    if not 0 <= args.sensor < m:
        raise ConfigError(f"--sensor must lie in [0, {m})")
    cfg = cfg.replace(node_count=m, window_length=length)
    spectrum = spectrum_of(graph) if graph is not None else None
    feats = all_variant_features(windows, spectrum, cfg, args.sensor, (variant,))[variant]
    metadata = {
        "variant": variant,
        "node_count": m,
        "window_length": length,
        "wpt_depth": cfg.wpt_depth,
        "single_sensor": args.sensor,
        "fused_aggregation": cfg.fused_aggregation,
        "graph_sha256": graph_fingerprint(graph) if graph is not None else None,
    }
    model = fit_nominal(
        feats,
        cfg.fpr_target,
        None if cfg.threshold_scope == "frame" else cfg.stream_length,
        calibration_scoring=cfg.calibration_scoring,
        folds=cfg.crossfit_folds,
        metadata=metadata,
    )
    save_model(model, args.model_out)
    print(f"{variant}: D={model.dimension} nu={model.cusum_drift_nu!r} h={model.cusum_threshold_h!r} "
          f"rho={model.shrinkage_rho!r} -> {args.model_out}")
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(args.model)
    meta = model.metadata
    variant = meta.get("variant", "GraphWptHos")
    windows = np.load(args.windows, allow_pickle=False) if args.windows else None
    if windows is None:
        raise ConfigError("--windows is required")
    windows = np.asarray(windows, dtype=float)
    if windows.ndim == 4:
        if not 0 <= args.stream_index < windows.shape[0]:
            raise ConfigError(f"--stream-index must lie in [0, {windows.shape[0]})")
        windows = windows[args.stream_index]
    if windows.ndim == 2:
        windows = windows[None]
    if windows.ndim != 3:
        raise ValueError(f"{args.windows}: expected (N, M, L) windows, got {windows.shape}")
    m, length = meta.get("node_count"), meta.get("window_length")
    if windows.shape[0] and (windows.shape[1], windows.shape[2]) != (m, length):
        raise ValueError(f"windows are {windows.shape[1:]} but the model expects ({m}, {length})")
    graph = _graph_for(args, variant)
    if graph is not None and meta.get("graph_sha256") and graph_fingerprint(graph) != meta["graph_sha256"]:
        raise ValueError("graph file does not match the graph used at calibration")
    if windows.shape[0]:
        run_cfg = cfg.replace(
            node_count=m, window_length=length, wpt_depth=meta.get("wpt_depth", cfg.wpt_depth),
            fused_aggregation=meta.get("fused_aggregation", cfg.fused_aggregation),
        )
        spectrum = spectrum_of(graph) if graph is not None else None
        feats = all_variant_features(windows, spectrum, run_cfg, meta.get("single_sensor", 0), (variant,))[variant]
        series = run_detector(model, feats)
    else:
        series = run_detector(model, np.zeros((0, model.dimension)))
    alarm = series.cusum > model.cusum_threshold_h
    sink = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["frame", "score", "cusum", "alarm"])
        for t, (a, g, flag) in enumerate(zip(series.scores, series.cusum, alarm)):
            writer.writerow([t, report_io.fmt_float(a), report_io.fmt_float(g), int(flag)])
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args: argparse.Namespace) -> int:
    result = run_benchmark(cfg)
    paths = report_io.write_outputs(result, cfg.output_dir, time_windows=args.time_windows)
    print(f"master_seed={cfg.master_seed} trials={len(result.trials)}/{cfg.trials} -> {paths['report.json'].parent}")
    if result.partial:
        print(f"{PROG}: error: RuntimeError: {result.error} (partial results written)", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (keys as printed by --print-config)")
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    common.add_argument("--regime", help="regime name(s), comma separated (A, B, C, D)")
    common.add_argument("--variant", help="detector variant(s), comma separated")
    common.add_argument("--jobs", type=int, help="worker processes for trials")
    common.add_argument("--graph-file", help="plain-text graph (M n / i j w / pos i x y)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog=PROG, description="Graph WPT+HOS anomaly detection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write simulated window datasets")
    p.add_argument("--out", help="output directory (default: sim_out)")
    p.add_argument("--streams", type=int, default=1, help="latency streams per trial (default: 1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="fit a nominal model from windows")
    p.add_argument("--windows", required=True, help=".npy array shaped (N, M, L)")
    p.add_argument("--model-out", required=True, help="model file to write (JSON)")
    p.add_argument("--sensor", type=int, default=0, help="sensor row for SingleSource (default: 0)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", parents=[common], help="score a window stream, emit per-frame CSV")
    p.add_argument("--model", required=True, help="model file from calibrate")
    p.add_argument("--windows", required=True, help=".npy array shaped (N, M, L) or (S, N, M, L)")
    p.add_argument("--stream-index", type=int, default=0, help="stream to use from a 4-D array")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bench", parents=[common], help="run the Monte Carlo benchmark")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--time-windows", type=int, default=32,
                   help="windows timed per size for complexity.csv; 0 skips timing")
    p.set_defaults(func=cmd_bench)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"{PROG}: error: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "simulate" and args.streams < 0:
            raise ConfigError("--streams must be >= 0")
        return args.func(cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        return _fail(EXIT_RUNTIME, exc)


if __name__ == "__main__":
    sys.exit(main())
