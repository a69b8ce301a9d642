"""Nominal calibration, shrinkage-Mahalanobis scoring and one-sided CUSUM."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import cholesky, solve_triangular

MODEL_FORMAT = "graph-wpt-hos/nominal-model"
MODEL_VERSION = 1
SCALE_FLOOR = 1e-9
# Smallest threshold handed out when no calibration frame ever leaves g = 0.
MIN_THRESHOLD = 1e-12
# Below this shrinkage a rank-deficient sample covariance cannot be factored.
_RHO_DEGENERATE = 1e-10


def ledoit_wolf_shrinkage(features: np.ndarray) -> tuple[np.ndarray, float]:
    """Ledoit-Wolf shrinkage towards a scaled identity.

    Returns ``(rho * T + (1 - rho) * S, rho)`` where ``S`` is the population
    covariance and ``T = trace(S) / D * I``. When ``N <= D`` and the closed-form
    intensity is (numerically) zero, ``rho = 1`` so the result stays positive
    definite.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"features must be N x D, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 calibration vectors, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("calibration features contain non-finite values")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / n
    target_scale = np.trace(s) / d
    dev = s.copy()
    dev[np.diag_indices(d)] -= target_scale
    d2 = float(np.sum(dev * dev))
    if d2 == 0.0:
        rho = 1.0
    else:
        # sum_i ||x_i x_i^T - S||_F^2 == sum_i ||x_i||^4 - n ||S||_F^2
        row_sq = np.sum(xc * xc, axis=1)
        spread = float(np.sum(row_sq * row_sq) - n * np.sum(s * s))
        b2 = min(d2, max(spread, 0.0) / n**2)
        rho = b2 / d2
        if rho < _RHO_DEGENERATE and n <= d:
            # Two samples (or any data whose outer products all equal S) make
            # the intensity estimate vanish while S is singular; use the target.
            rho = 1.0
    shrunk = (1.0 - rho) * s
    shrunk[np.diag_indices(d)] += rho * target_scale
    return shrunk, float(rho)


@dataclass(frozen=True)
class CusumState:
    g: float = 0.0
    frames_since_reset: int = 0


def cusum_step(state: CusumState, score: float, nu: float) -> CusumState:
    return CusumState(max(0.0, state.g + score - nu), state.frames_since_reset + 1)


def cusum_path(scores: np.ndarray, nu: float) -> np.ndarray:
    """CUSUM trajectory over the last axis, starting from g0 = 0.

    A 2-D input is treated as independent streams (one per row).
    """
    a = np.asarray(scores, dtype=float)
    g = np.empty_like(a)
    acc = np.zeros(a.shape[:-1])
    for t in range(a.shape[-1]):
        acc = np.maximum(0.0, acc + a[..., t] - nu)
        g[..., t] = acc
    return g


def tune_threshold(
    scores: np.ndarray, nu: float, fpr_target: float, frames_per_sequence: int | None = None
) -> float:
    """Smallest attained CUSUM level keeping the per-frame alarm fraction within target.

    The calibration stream is cut into sequences of ``frames_per_sequence``
    frames (one sequence when None), each started from g = 0.
    """
    if not 0.0 < fpr_target <= 1.0:
        raise ValueError(f"fpr_target must lie in (0, 1], got {fpr_target}")
    a = np.asarray(scores, dtype=float)
    n = a.size
    if n == 0:
        raise ValueError("empty calibration score stream")
    step = frames_per_sequence or n
    g = np.concatenate([cusum_path(a[i : i + step], nu) for i in range(0, n, step)])
    allowed = int(np.floor(fpr_target * n + 1e-9))
    if allowed >= n:
        return 0.0
    # alarms are g > h; the (allowed+1)-th largest level lets exactly `allowed` through at most
    h = float(np.sort(g)[::-1][allowed])
    return h if h > 0 else MIN_THRESHOLD


@dataclass(frozen=True, eq=False)
class NominalModel:
    """Calibrated detector state.

    ``mean`` and ``scale`` standardize raw features; the shrunk covariance
    lives in the standardized space, where the calibration mean is zero.
    """

    mean: np.ndarray
    scale: np.ndarray
    shrunk_covariance: np.ndarray
    shrinkage_rho: float
    cusum_drift_nu: float
    cusum_threshold_h: float
    calibration_count: int
    calibration_scores: np.ndarray
    metadata: dict = field(default_factory=dict)
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name in ("mean", "scale", "shrunk_covariance", "calibration_scores"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        lower = cholesky(self.shrunk_covariance, lower=True)
        lower.setflags(write=False)
        object.__setattr__(self, "factor", lower)

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def standardize(self, f: np.ndarray) -> np.ndarray:
        return (np.asarray(f, dtype=float) - self.mean) / self.scale

    def score(self, f: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance for one vector or an ``(N, D)`` batch."""
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.dimension:
            raise ValueError(f"feature dimension {f.shape[-1]} != model dimension {self.dimension}")
        if not np.all(np.isfinite(f)):
            raise ValueError("feature vector contains non-finite values")
        z = self.standardize(f)
        y = solve_triangular(self.factor, np.atleast_2d(z).T, lower=True, check_finite=False)
        a = np.sum(y * y, axis=0)
        return a[0] if f.ndim == 1 else a


def mahalanobis_score(model: NominalModel, f: np.ndarray) -> float:
    return float(model.score(np.asarray(f, dtype=float).reshape(-1)))


def _standardizer(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    scale = np.maximum(features.std(axis=0), SCALE_FLOOR)
    return mean, scale


def _fit_core(features: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    mean, scale = _standardizer(features)
    cov, rho = ledoit_wolf_shrinkage((features - mean) / scale)
    return mean, scale, cov, rho


def _quadratic_form(mean, scale, cov, x: np.ndarray) -> np.ndarray:
    lower = cholesky(cov, lower=True)
    y = solve_triangular(lower, ((x - mean) / scale).T, lower=True, check_finite=False)
    return np.sum(y * y, axis=0)


def crossfit_scores(features: np.ndarray, folds: int) -> np.ndarray:
    """Out-of-fold scores: fold ``k`` holds rows ``i`` with ``i % folds == k``."""
    n = features.shape[0]
    folds = min(folds, n)
    out = np.empty(n)
    idx = np.arange(n)
    for k in range(folds):
        held = idx % folds == k
        train = features[~held]
        if train.shape[0] < 2:
            raise ValueError(f"{folds} folds leave fewer than 2 training vectors")
        mean, scale, cov, _ = _fit_core(train)
        out[held] = _quadratic_form(mean, scale, cov, features[held])
    return out


def fit_nominal(
    features: np.ndarray,
    fpr_target: float = 0.05,
    frames_per_sequence: int | None = None,
    calibration_scoring: str = "crossfit",
    folds: int = 10,
    metadata: dict | None = None,
) -> NominalModel:
    """Fit the nominal model, the CUSUM drift and the CUSUM threshold.

    ``calibration_scoring`` selects the score stream used for the drift and
    threshold: ``"crossfit"`` scores every calibration vector with a model
    that did not see it, ``"insample"`` reuses the full fit.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need an N x D calibration matrix with N >= 2, got shape {x.shape}")
    mean, scale, cov, rho = _fit_core(x)
    if calibration_scoring == "crossfit" and x.shape[0] >= 4:
        cal = crossfit_scores(x, folds)
    elif calibration_scoring in ("crossfit", "insample"):
        cal = _quadratic_form(mean, scale, cov, x)
    else:
        raise ValueError(f"unknown calibration_scoring {calibration_scoring!r}")
    nu = float(np.mean(cal))
    h = tune_threshold(cal, nu, fpr_target, frames_per_sequence)
    return NominalModel(mean, scale, cov, rho, nu, h, x.shape[0], cal, dict(metadata or {}))


@dataclass(frozen=True)
class ScoreSeries:
    scores: np.ndarray
    cusum: np.ndarray
    alarms: np.ndarray

    @property
    def first_alarm(self) -> int | None:
        return int(self.alarms[0]) if self.alarms.size else None


def run_detector(model: NominalModel, feature_stream: Iterable[np.ndarray] | np.ndarray) -> ScoreSeries:
    """Score a stream frame by frame and run the CUSUM from g0 = 0."""
    frames = np.asarray(list(feature_stream) if not isinstance(feature_stream, np.ndarray) else feature_stream, dtype=float)
    if frames.size == 0:
        empty = np.zeros(0)
        return ScoreSeries(empty, empty, np.zeros(0, dtype=int))
    scores = np.atleast_1d(model.score(np.atleast_2d(frames)))
    g = cusum_path(scores, model.cusum_drift_nu)
    return ScoreSeries(scores, g, np.flatnonzero(g > model.cusum_threshold_h))


def _dump(model: NominalModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dimension": model.dimension,
        "calibration_count": model.calibration_count,
        "shrinkage_rho": model.shrinkage_rho,
        "cusum_drift_nu": model.cusum_drift_nu,
        "cusum_threshold_h": model.cusum_threshold_h,
        "metadata": model.metadata,
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "calibration_scores": model.calibration_scores.tolist(),
        "shrunk_covariance": model.shrunk_covariance.tolist(),
    }
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: NominalModel, path: str | Path) -> None:
    Path(path).write_text(_dump(model))


def load_model(path: str | Path) -> NominalModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a nominal model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    model = NominalModel(
        mean=np.array(doc["mean"]),
        scale=np.array(doc["scale"]),
        shrunk_covariance=np.array(doc["shrunk_covariance"]),
        shrinkage_rho=doc["shrinkage_rho"],
        cusum_drift_nu=doc["cusum_drift_nu"],
        cusum_threshold_h=doc["cusum_threshold_h"],
        calibration_count=doc["calibration_count"],
        calibration_scores=np.array(doc["calibration_scores"]),
        metadata=doc["metadata"],
    )
    if model.dimension != doc["dimension"]:
        raise ValueError(f"{path}: dimension field disagrees with stored mean")
    return model

