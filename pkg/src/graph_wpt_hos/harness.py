"""Monte Carlo evaluation of the six detector variants over the shift regimes.

One trial builds a sensor graph, calibrates every variant on matched nominal
data, then evaluates each regime on freshly simulated test data. Regime
perturbations touch only the test side. Blocks of windows are drawn from
seed substreams keyed by (trial, block, stage, chunk), so every regime in a
trial sees the same underlying Gaussian, Gamma and fading draws.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import metrics
from .channel import AnomalyParams, ChannelParams, SignalModelParams, apply_channel, generate_nominal, inject_anomaly
from .config import RegimeSpec, RunConfig
from .features import extract_features, feature_dimension, layout_slices
from .graph_spectral import (
    LaplacianSpectrum,
    SensorGraph,
    build_random_geometric_graph,
    gft,
    rewire_edges,
    spectrum_of,
)
from .scoring import NominalModel, cusum_path, fit_nominal
from .seeding import rng_for, substream
from .wavelet_packet import daubechies4_filters

logger = logging.getLogger(__name__)

ROC_GRID = np.linspace(0.0, 1.0, 101)
PR_GRID = np.linspace(0.0, 1.0, 101)


class TrialError(RuntimeError):
    """A trial failed; the message names the stage."""


def variant_dimension(kind: str, cfg: RunConfig) -> int:
    return _dimension(kind, cfg.node_count, cfg.wpt_depth)


def _dimension(kind: str, m: int, depth: int) -> int:
    nb = 2**depth
    return {
        "GraphWptHos": feature_dimension(m, depth),
        "WptHosNoGraph": feature_dimension(m, depth),
        "WptOnly": m * nb,
        "HosOnly": 2 * m,
        "FusedSource": 3 + nb,
        "SingleSource": 3 + nb,
    }[kind]


def _single_row(raw: np.ndarray, m: int, depth: int, sensor: int) -> np.ndarray:
    sl = layout_slices(m, depth)
    nb = 2**depth
    wpt = raw[..., sl["wpt"]].reshape(*raw.shape[:-1], m, nb)[..., sensor, :]
    return np.concatenate(
        [
            raw[..., sl["energy"]][..., sensor : sensor + 1],
            wpt,
            raw[..., sl["skewness"]][..., sensor : sensor + 1],
            raw[..., sl["kurtosis"]][..., sensor : sensor + 1],
        ],
        axis=-1,
    )


def _fused(windows: np.ndarray, raw: np.ndarray | None, cfg: RunConfig) -> np.ndarray:
    depth = cfg.wpt_depth
    if cfg.fused_aggregation == "mean":
        return extract_features(windows.mean(axis=-2, keepdims=True), depth)
    if cfg.fused_aggregation == "median":
        return extract_features(np.median(windows, axis=-2, keepdims=True), depth)
    # feature_mean: per-sensor features averaged over sensors
    m, nb = cfg.node_count, 2**depth
    if raw is None:
        raw = extract_features(windows, depth)
    sl = layout_slices(m, depth)
    wpt = raw[..., sl["wpt"]].reshape(*raw.shape[:-1], m, nb).mean(axis=-2)
    return np.concatenate(
        [
            raw[..., sl["energy"]].mean(axis=-1, keepdims=True),
            wpt,
            raw[..., sl["skewness"]].mean(axis=-1, keepdims=True),
            raw[..., sl["kurtosis"]].mean(axis=-1, keepdims=True),
        ],
        axis=-1,
    )


def variant_features(
    kind: str,
    window: np.ndarray,
    spectrum: LaplacianSpectrum,
    cfg: RunConfig,
    single_sensor: int = 0,
) -> np.ndarray:
    """Feature map of one detector variant for a window or a stack of windows.

    Only ``GraphWptHos`` projects onto the graph; every baseline reads the
    vertex-domain sensor rows.
    """
    return all_variant_features(window, spectrum, cfg, single_sensor, (kind,))[kind]


def all_variant_features(
    windows: np.ndarray,
    spectrum: LaplacianSpectrum,
    cfg: RunConfig,
    single_sensor: int,
    kinds=None,
) -> dict[str, np.ndarray]:
    kinds = tuple(kinds or cfg.variants)
    depth, m = cfg.wpt_depth, cfg.node_count
    filters = daubechies4_filters()
    out: dict[str, np.ndarray] = {}
    raw = None
    if any(k in kinds for k in ("WptHosNoGraph", "WptOnly", "HosOnly", "SingleSource")) or (
        "FusedSource" in kinds and cfg.fused_aggregation == "feature_mean"
    ):
        raw = extract_features(windows, depth, filters)
    sl = layout_slices(m, depth)
    for kind in kinds:
        if kind == "GraphWptHos":
            out[kind] = extract_features(gft(spectrum, windows), depth, filters)
        elif kind == "WptHosNoGraph":
            out[kind] = raw
        elif kind == "WptOnly":
            out[kind] = raw[..., sl["wpt"]]
        elif kind == "HosOnly":
            out[kind] = np.concatenate([raw[..., sl["skewness"]], raw[..., sl["kurtosis"]]], axis=-1)
        elif kind == "FusedSource":
            out[kind] = _fused(windows, raw, cfg)
        elif kind == "SingleSource":
            out[kind] = _single_row(raw, m, depth, single_sensor)
        else:
            raise ValueError(f"unknown variant {kind!r}")
    return out


# --------------------------------------------------------------------------- simulation


@dataclass(frozen=True)
class BlockSpec:
    """A batch of simulated windows.

    ``anomalous`` marks which windows carry an injection.
    """

    name: str
    count: int
    anomalous: np.ndarray
    duration: float | None = None  # overrides cfg.anomaly_duration


def _signal_params(cfg: RunConfig) -> SignalModelParams:
    return SignalModelParams(cfg.signal_kernel, cfg.signal_power)


def _anomaly_params(cfg: RunConfig, duration: float | None = None) -> AnomalyParams:
    return AnomalyParams(
        cfg.anomaly_alpha,
        cfg.anomaly_beta,
        cfg.anomaly_duration if duration is None else duration,
        center=cfg.anomaly_center,
    )


def simulate_chunks(
    cfg: RunConfig,
    trial: int,
    block: BlockSpec,
    spectrum: LaplacianSpectrum,
    channel: ChannelParams,
    alpha_perturbation: float = 0.0,
) -> Iterator[tuple[slice, np.ndarray, np.ndarray]]:
    """Yield ``(index slice, received windows, onsets)`` chunk by chunk.

    Onsets are -1 for windows without an injection.
    """
    seed = cfg.master_seed
    sig, anom = _signal_params(cfg), _anomaly_params(cfg, block.duration)
    for c, start in enumerate(range(0, block.count, cfg.chunk_size)):
        stop = min(start + cfg.chunk_size, block.count)
        x = generate_nominal(
            spectrum, cfg.window_length, sig, rng_for(seed, trial, block.name, "signal", c), stop - start
        )
        nominal = x.copy()
        onsets = np.full(stop - start, -1)
        hit = np.flatnonzero(block.anomalous[start:stop])
        if hit.size:
            alpha = cfg.anomaly_alpha
            if alpha_perturbation:
                signs = rng_for(seed, trial, block.name, "alpha", c).choice([-1.0, 1.0], size=hit.size)
                alpha = cfg.anomaly_alpha * (1.0 + alpha_perturbation * signs)
            xa, on = inject_anomaly(
                x[hit], spectrum, anom, rng_for(seed, trial, block.name, "anomaly", c), alpha=alpha
            )
            x[hit] = xa
            onsets[hit] = on
        y = apply_channel(
            x,
            channel,
            rng_for(seed, trial, block.name, "fading", c),
            noise_seed=rng_for(seed, trial, block.name, "noise", c),
            reference=nominal,
        )
        yield slice(start, stop), y, onsets


def block_features(
    cfg: RunConfig,
    trial: int,
    block: BlockSpec,
    true_spectrum: LaplacianSpectrum,
    detector_spectrum: LaplacianSpectrum,
    channel: ChannelParams,
    single_sensor: int,
    alpha_perturbation: float = 0.0,
) -> dict[str, np.ndarray]:
    feats = {k: np.empty((block.count, variant_dimension(k, cfg))) for k in cfg.variants}
    for sl, y, _ in simulate_chunks(cfg, trial, block, true_spectrum, channel, alpha_perturbation):
        for k, f in all_variant_features(y, detector_spectrum, cfg, single_sensor).items():
            feats[k][sl] = f
    return feats


# --------------------------------------------------------------------------- trials


@dataclass
class TrialContext:
    trial: int
    graph: SensorGraph
    spectrum: LaplacianSpectrum
    single_sensor: int
    models: dict[str, NominalModel]


@dataclass
class VariantResult:
    roc_auc: float
    pr_auc: float
    precision: float
    recall: float
    f1: float
    threshold: float
    latency: metrics.LatencySummary
    latencies: list[int | None]
    false_alarm_rate: float
    roc_curve: np.ndarray
    pr_curve: np.ndarray
    op_count: int


@dataclass
class TrialResult:
    trial: int
    regime: str
    variants: dict[str, VariantResult]
    wall_time: float = field(default=0.0, compare=False)


def regime_preset(name: str) -> RegimeSpec:
    from .config import REGIME_PRESETS

    return REGIME_PRESETS[name]


def trial_graph(cfg: RunConfig, trial: int) -> SensorGraph:
    return build_random_geometric_graph(
        cfg.node_count, cfg.mean_degree, substream(cfg.master_seed, trial, "graph", "topology")
    )


def single_sensor_for(cfg: RunConfig, trial: int) -> int:
    return int(rng_for(cfg.master_seed, trial, "variant", "sensor").integers(cfg.node_count))


def calibrate_trial(cfg: RunConfig, trial: int) -> TrialContext:
    """Stages 1-3: topology, matched calibration data, per-variant fits."""
    seed = cfg.master_seed
    try:
        graph = trial_graph(cfg, trial)
        spectrum = spectrum_of(graph)
    except Exception as exc:
        raise TrialError(f"trial {trial}: graph construction failed: {exc}") from exc
    single = single_sensor_for(cfg, trial)
    block = BlockSpec("calibration", cfg.calibration_windows, np.zeros(cfg.calibration_windows, bool))
    channel = ChannelParams(cfg.fading_variance, cfg.snr_db)
    try:
        feats = block_features(cfg, trial, block, spectrum, spectrum, channel, single)
    except Exception as exc:
        raise TrialError(f"trial {trial}: calibration simulation failed: {exc}") from exc
    per_seq = None if cfg.threshold_scope == "frame" else cfg.stream_length
    models = {}
    for kind, f in feats.items():
        try:
            models[kind] = fit_nominal(
                f,
                cfg.fpr_target,
                per_seq,
                calibration_scoring=cfg.calibration_scoring,
                folds=cfg.crossfit_folds,
                metadata={"variant": kind},
            )
        except Exception as exc:
            raise TrialError(f"trial {trial}: calibration of {kind} failed: {exc}") from exc
    return TrialContext(trial, graph, spectrum, single, models)


def _test_spectrum(cfg: RunConfig, ctx: TrialContext, regime: RegimeSpec) -> LaplacianSpectrum:
    if regime.rewire_fraction == 0:
        return ctx.spectrum
    rewired = rewire_edges(
        ctx.graph, regime.rewire_fraction, substream(cfg.master_seed, ctx.trial, "regime", "rewire")
    )
    return spectrum_of(rewired)


def evaluate_regime(cfg: RunConfig, ctx: TrialContext, regime: RegimeSpec) -> TrialResult:
    """Stages 4-8: perturb test conditions, score, and aggregate metrics."""
    t0 = time.perf_counter()
    trial = ctx.trial
    try:
        true_spec = _test_spectrum(cfg, ctx, regime)
    except Exception as exc:
        raise TrialError(f"trial {trial} regime {regime.name}: rewiring failed: {exc}") from exc
    channel = ChannelParams(regime.fading_variance, cfg.snr_db + regime.snr_delta_db)
    n_nom, n_anom = cfg.test_nominal_windows, cfg.test_anomalous_windows
    n_frames = cfg.stream_count * cfg.stream_length
    stream_mask = np.tile(np.arange(cfg.stream_length) >= cfg.stream_onset, cfg.stream_count)
    blocks = {
        "test_nominal": BlockSpec("test_nominal", n_nom, np.zeros(n_nom, bool)),
        "test_anomalous": BlockSpec("test_anomalous", n_anom, np.ones(n_anom, bool)),
        "stream": BlockSpec("stream", n_frames, stream_mask, cfg.stream_anomaly_duration),
    }
    try:
        feats = {
            name: block_features(
                cfg, trial, b, true_spec, ctx.spectrum, channel, ctx.single_sensor, regime.alpha_perturbation
            )
            for name, b in blocks.items()
        }
    except Exception as exc:
        raise TrialError(f"trial {trial} regime {regime.name}: test simulation failed: {exc}") from exc

    labels = np.r_[np.zeros(n_nom), np.ones(n_anom)]
    onsets = [cfg.stream_onset] * cfg.stream_count
    results = {}
    for kind in cfg.variants:
        model = ctx.models[kind]
        try:
            scores = model.score(np.concatenate([feats["test_nominal"][kind], feats["test_anomalous"][kind]]))
            point = metrics.f1_optimal_point(scores, labels)
            stream_scores = model.score(feats["stream"][kind]).reshape(cfg.stream_count, cfg.stream_length)
            g = cusum_path(stream_scores, model.cusum_drift_nu)
        except Exception as exc:
            raise TrialError(f"trial {trial} regime {regime.name}: scoring {kind} failed: {exc}") from exc
        alarms = [metrics.first_alarm_at_or_after(row, model.cusum_threshold_h, cfg.stream_onset) for row in g]
        latencies = [None if a is None else a - cfg.stream_onset for a in alarms]
        pre = g[:, : cfg.stream_onset] > model.cusum_threshold_h
        results[kind] = VariantResult(
            roc_auc=metrics.roc_auc(scores, labels),
            pr_auc=metrics.average_precision(scores, labels),
            precision=point.precision,
            recall=point.recall,
            f1=point.f1,
            threshold=point.threshold,
            latency=metrics.latency_stats(alarms, onsets, cfg.stream_horizon),
            latencies=latencies,
            false_alarm_rate=float(pre.mean()) if pre.size else float("nan"),
            roc_curve=metrics.roc_on_grid(scores, labels, ROC_GRID),
            pr_curve=metrics.pr_on_grid(scores, labels, PR_GRID),
            op_count=variant_op_count(kind, cfg.node_count, cfg.window_length, cfg.wpt_depth),
        )
    return TrialResult(trial, regime.name, results, time.perf_counter() - t0)


def run_trial(cfg: RunConfig, regime: RegimeSpec, trial_seed: int) -> TrialResult:
    """Calibrate and evaluate one regime for trial index ``trial_seed``."""
    return evaluate_regime(cfg, calibrate_trial(cfg, trial_seed), regime)


def run_trial_all_regimes(cfg: RunConfig, trial: int) -> list[TrialResult]:
    ctx = calibrate_trial(cfg, trial)
    out = [evaluate_regime(cfg, ctx, spec) for spec in cfg.regime_specs()]
    logger.info("trial %d done", trial)
    return out


def _block_windows(cfg, trial, block, spectrum, channel, alpha_perturbation=0.0):
    windows = np.empty((block.count, cfg.node_count, cfg.window_length))
    onsets = np.empty(block.count, dtype=int)
    for sl, y, on in simulate_chunks(cfg, trial, block, spectrum, channel, alpha_perturbation):
        windows[sl], onsets[sl] = y, on
    return windows, onsets


def simulate_dataset(
    cfg: RunConfig,
    trial: int,
    regime: RegimeSpec,
    graph: SensorGraph | None = None,
    streams: int = 1,
) -> dict:
    """Received windows for one trial, as the benchmark would draw them.

    Calibration windows use matched conditions; the test windows and the
    latency streams use ``regime``. Streams are shaped
    ``(streams, stream_length, M, L)`` with the anomaly from ``stream_onset``.
    """
    graph = graph if graph is not None else trial_graph(cfg, trial)
    if graph.node_count != cfg.node_count:
        raise ValueError(f"graph has {graph.node_count} nodes, config expects {cfg.node_count}")
    spectrum = spectrum_of(graph)
    test_spec = spectrum
    if regime.rewire_fraction:
        test_spec = spectrum_of(
            rewire_edges(graph, regime.rewire_fraction, substream(cfg.master_seed, trial, "regime", "rewire"))
        )
    matched = ChannelParams(cfg.fading_variance, cfg.snr_db)
    shifted = ChannelParams(regime.fading_variance, cfg.snr_db + regime.snr_delta_db)
    n_cal, n_nom, n_anom = cfg.calibration_windows, cfg.test_nominal_windows, cfg.test_anomalous_windows
    cal, _ = _block_windows(cfg, trial, BlockSpec("calibration", n_cal, np.zeros(n_cal, bool)), spectrum, matched)
    nom, _ = _block_windows(
        cfg, trial, BlockSpec("test_nominal", n_nom, np.zeros(n_nom, bool)), test_spec, shifted
    )
    anom, onsets = _block_windows(
        cfg, trial, BlockSpec("test_anomalous", n_anom, np.ones(n_anom, bool)), test_spec, shifted,
        regime.alpha_perturbation,
    )
    mask = np.tile(np.arange(cfg.stream_length) >= cfg.stream_onset, streams)
    stream, _ = _block_windows(
        cfg, trial, BlockSpec("stream", streams * cfg.stream_length, mask, cfg.stream_anomaly_duration),
        test_spec, shifted, regime.alpha_perturbation,
    )
    return {
        "graph": graph,
        "single_sensor": single_sensor_for(cfg, trial),
        "calibration": cal,
        "test_nominal": nom,
        "test_anomalous": anom,
        "anomalous_onsets": onsets,
        "stream": stream.reshape(streams, cfg.stream_length, cfg.node_count, cfg.window_length),
    }


# --------------------------------------------------------------------------- complexity


def op_counts(m: int, length: int, depth: int) -> dict[str, int]:
    """Analytic multiply-accumulate counts per window for the proposed detector."""
    d = feature_dimension(m, depth)
    return {
        "gft": m * m * length,
        "wpt": 2 * 4 * m * length * depth,
        "energy": m * length,
        "hos": 4 * m * length,
        "scoring": d * d,
        "cusum": 1,
    }


def variant_op_count(kind: str, m: int, length: int, depth: int) -> int:
    c = op_counts(m, length, depth)
    rows = {"FusedSource": 1, "SingleSource": 1}.get(kind, m)
    per_row = c["wpt"] // m + c["energy"] // m + c["hos"] // m
    if kind == "WptOnly":
        per_row = c["wpt"] // m
    elif kind == "HosOnly":
        per_row = c["hos"] // m
    total = rows * per_row
    if kind == "GraphWptHos":
        total += c["gft"]
    if kind == "FusedSource":
        total += m * length
    d = _dimension(kind, m, depth)
    return total + d * d + c["cusum"]


def complexity_report(cfg: RunConfig, sizes=None, time_windows: int = 64) -> list[dict]:
    """Per-window MAC counts over an (M, L) sweep plus measured wall-clock.

    Timing runs the proposed pipeline on ``time_windows`` random windows of
    each size on this machine.
    """
    sizes = sizes or [(m, l) for m in (20, cfg.node_count, 50) for l in (128, cfg.window_length, 512)]
    seen = set()
    rows = []
    rng = np.random.default_rng(0)
    for m, length in sizes:
        if (m, length) in seen:
            continue
        seen.add((m, length))
        counts = op_counts(m, length, cfg.wpt_depth)
        total = sum(counts.values())
        wall = float("nan")
        if time_windows:
            u = np.linalg.qr(rng.standard_normal((m, m)))[0]
            spec = LaplacianSpectrum(np.zeros(m), u, np.zeros((m, m)))
            y = rng.standard_normal((max(time_windows, 2), m, length))
            feats = extract_features(gft(spec, y), cfg.wpt_depth)
            model = fit_nominal(feats, cfg.fpr_target, calibration_scoring="insample")
            t0 = time.perf_counter()
            model.score(extract_features(gft(spec, y), cfg.wpt_depth))
            wall = (time.perf_counter() - t0) / len(y)
        rows.append(
            {
                "M": m,
                "L": length,
                "J": cfg.wpt_depth,
                "D": feature_dimension(m, cfg.wpt_depth),
                **{f"{k}_macs": v for k, v in counts.items()},
                "total_macs": total,
                "in_budget": bool(1e5 <= total <= 1e7),
                "wall_seconds_per_window": wall,
            }
        )
    return rows


# --------------------------------------------------------------------------- benchmark


def _summary(values) -> dict[str, float]:
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        nan = float("nan")
        return dict(mean=nan, median=nan, p5=nan, p25=nan, p75=nan, p95=nan, n=0)
    p5, p25, med, p75, p95 = np.percentile(v, [5, 25, 50, 75, 95])
    return dict(
        mean=float(v.mean()), median=float(med), p5=float(p5), p25=float(p25),
        p75=float(p75), p95=float(p95), n=int(v.size),
    )


SUMMARY_METRICS = ("roc_auc", "pr_auc", "precision", "recall", "f1", "false_alarm_rate")


@dataclass
class BenchReport:
    config: RunConfig
    trials: list[list[TrialResult]]
    complexity: list[dict]
    partial: bool = False
    error: str | None = None

    def cells(self) -> Iterator[tuple[str, str, list[VariantResult]]]:
        for r_idx, regime in enumerate(self.config.regimes):
            for kind in self.config.variants:
                yield kind, regime, [t[r_idx].variants[kind] for t in self.trials if len(t) > r_idx]

    def metric_table(self) -> list[dict]:
        rows = []
        for kind, regime, vals in self.cells():
            for name in SUMMARY_METRICS:
                rows.append({"variant": kind, "regime": regime, "metric": name,
                             **_summary([getattr(v, name) for v in vals])})
            lat = self.pooled_latency(vals)
            for name in ("mean", "median", "std", "p5", "p95", "detection_rate"):
                rows.append({"variant": kind, "regime": regime, "metric": f"latency_{name}",
                             **_summary([getattr(lat, name)])})
        return rows

    def pooled_latency(self, vals: list[VariantResult]) -> metrics.LatencySummary:
        alarms, onsets = [], []
        for v in vals:
            for lat in v.latencies:
                alarms.append(None if lat is None else self.config.stream_onset + lat)
                onsets.append(self.config.stream_onset)
        return metrics.latency_stats(alarms, onsets, self.config.stream_horizon)

    def per_trial(self, metric: str, kind: str, regime: str) -> list[float]:
        r_idx = list(self.config.regimes).index(regime)
        return [getattr(t[r_idx].variants[kind], metric) for t in self.trials if len(t) > r_idx]


def run_benchmark(cfg: RunConfig, jobs: int | None = None) -> BenchReport:
    """Run every trial, optionally in worker processes; output order is trial order."""
    jobs = jobs or cfg.jobs
    trials: list[list[TrialResult]] = []
    error = None
    try:
        if jobs > 1 and cfg.trials > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for res in pool.map(run_trial_all_regimes, [cfg] * cfg.trials, range(cfg.trials)):
                    trials.append(res)
        else:
            for t in range(cfg.trials):
                trials.append(run_trial_all_regimes(cfg, t))
    except TrialError as exc:
        error = str(exc)
        logger.error("benchmark aborted: %s", exc)
    return BenchReport(cfg, trials, complexity_report(cfg, time_windows=0), partial=error is not None, error=error)
