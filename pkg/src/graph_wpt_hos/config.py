"""Run configuration: simulation defaults, regime presets and YAML loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

VARIANTS = ("GraphWptHos", "WptHosNoGraph", "WptOnly", "HosOnly", "FusedSource", "SingleSource")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class RegimeSpec:
    name: str
    snr_delta_db: float = 0.0
    fading_variance: float = 1.0
    rewire_fraction: float = 0.0
    alpha_perturbation: float = 0.0

    def validate(self) -> None:
        if self.fading_variance <= 0:
            raise ConfigError(f"regime {self.name}: fading_variance must be > 0")
        if not 0 <= self.rewire_fraction <= 1:
            raise ConfigError(f"regime {self.name}: rewire_fraction must lie in [0, 1]")
        if not 0 <= self.alpha_perturbation < 1:
            raise ConfigError(f"regime {self.name}: alpha_perturbation must lie in [0, 1)")


REGIME_PRESETS: dict[str, RegimeSpec] = {
    "A": RegimeSpec("A", 0.0, 1.0, 0.0, 0.0),
    "B": RegimeSpec("B", -5.0, 1.0, 0.0, 0.0),
    "C": RegimeSpec("C", -10.0, 1.5, 0.10, 0.0),
    "D": RegimeSpec("D", -15.0, 2.0, 0.25, 0.25),
}


@dataclass(frozen=True)
class RunConfig:
    # simulation (calibration conditions)
    node_count: int = 24
    window_length: int = 256
    mean_degree: float = 4.0
    snr_db: float = 20.0
    fading_variance: float = 1.0
    signal_power: float = 26.4
    signal_kernel: str = "lowpass"
    anomaly_alpha: float = 2.0
    anomaly_beta: float = 1.5
    anomaly_duration: float = 0.25
    anomaly_center: bool = False
    # detector
    wpt_depth: int = 3
    band_ordering: str = "frequency"
    fpr_target: float = 0.05
    threshold_scope: str = "frame"
    calibration_scoring: str = "crossfit"
    crossfit_folds: int = 10
    fused_aggregation: str = "mean"
    # experiment
    trials: int = 30
    calibration_windows: int = 200
    test_nominal_windows: int = 200
    test_anomalous_windows: int = 100
    stream_count: int = 20
    stream_length: int = 100
    stream_onset: int = 20
    stream_horizon: int = 80
    stream_anomaly_duration: float = 1.0
    regimes: tuple[str, ...] = ("A", "B", "C", "D")
    variants: tuple[str, ...] = VARIANTS
    master_seed: int = 20250101
    jobs: int = 1
    output_dir: str = "bench_out"
    chunk_size: int = 250

    def validate(self) -> "RunConfig":
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        need(self.node_count >= 2, "node_count must be >= 2")
        need(1 < self.mean_degree < self.node_count - 1 or self.node_count == 2,
             "mean_degree must lie in (1, node_count - 1)")
        need(self.wpt_depth >= 0, "wpt_depth must be >= 0")
        need(self.window_length >= 4 and self.window_length % 2**self.wpt_depth == 0,
             "window_length must be >= 4 and divisible by 2**wpt_depth")
        need(self.fading_variance > 0, "fading_variance must be > 0")
        need(self.signal_power > 0, "signal_power must be > 0")
        need(self.signal_kernel in ("lowpass", "flat"), "signal_kernel must be lowpass or flat")
        need(self.anomaly_alpha > 0 and self.anomaly_beta > 0, "anomaly alpha and beta must be > 0")
        need(0 < self.anomaly_duration <= 1, "anomaly_duration must lie in (0, 1]")
        need(self.anomaly_duration * self.window_length >= 1, "anomaly must span at least one sample")
        need(self.band_ordering in ("frequency", "natural"), "band_ordering must be frequency or natural")
        need(0 < self.fpr_target <= 1, "fpr_target must lie in (0, 1]")
        need(self.threshold_scope in ("frame", "sequence"), "threshold_scope must be frame or sequence")
        need(self.calibration_scoring in ("crossfit", "insample"),
             "calibration_scoring must be crossfit or insample")
        need(self.crossfit_folds >= 2, "crossfit_folds must be >= 2")
        need(self.fused_aggregation in ("mean", "median", "feature_mean"),
             "fused_aggregation must be mean, median or feature_mean")
        need(self.trials >= 0, "trials must be >= 0")
        need(self.calibration_windows >= 2, "calibration_windows must be >= 2")
        need(self.test_nominal_windows >= 1 and self.test_anomalous_windows >= 1,
             "need at least one nominal and one anomalous test window")
        need(self.stream_count >= 0 and self.stream_length >= 1, "invalid stream protocol")
        need(0 <= self.stream_onset < self.stream_length, "stream_onset must lie inside the stream")
        need(self.stream_horizon >= 1, "stream_horizon must be >= 1")
        need(0 < self.stream_anomaly_duration <= 1, "stream_anomaly_duration must lie in (0, 1]")
        need(len(self.regimes) > 0, "at least one regime is required")
        for r in self.regimes:
            need(r in REGIME_PRESETS, f"unknown regime {r!r}")
        need(len(self.variants) > 0, "at least one variant is required")
        for v in self.variants:
            need(v in VARIANTS, f"unknown variant {v!r}")
        need(0 <= self.master_seed < 2**64, "master_seed must be a 64-bit unsigned integer")
        need(self.jobs >= 1, "jobs must be >= 1")
        need(self.chunk_size >= 1, "chunk_size must be >= 1")
        return self

    def regime_specs(self) -> list[RegimeSpec]:
        return [REGIME_PRESETS[r] for r in self.regimes]

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["regimes"] = list(self.regimes)
        out["variants"] = list(self.variants)
        return out


def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, tuple):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}: expected a list")
        return tuple(str(v) for v in value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def from_mapping(data: dict[str, Any] | None, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    data = dict(data or {})
    known = {f.name: getattr(base, f.name) for f in fields(RunConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    changes = {k: _coerce(k, v, known[k]) for k, v in data.items()}
    return dataclasses.replace(base, **changes).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_mapping(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
