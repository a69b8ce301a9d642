"""Ranking metrics, the F1-optimal operating point and CUSUM latency summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class SingleClassError(ValueError):
    """Ranking metrics need at least one positive and one negative label."""


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise SingleClassError("both classes must be present")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(pos > neg) + P(tie) / 2."""
    s, y = _check(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _descending_counts(s: np.ndarray, y: np.ndarray):
    """Cumulative TP/FP counts at each distinct threshold, highest first."""
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), s_sorted.size - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    return s_sorted[last], tp, fp


def average_precision(scores, labels) -> float:
    """Step-interpolated AP, ``sum_k (R_k - R_{k-1}) P_k``, ties grouped."""
    s, y = _check(scores, labels)
    _, tp, fp = _descending_counts(s, y)
    recall = tp / y.sum()
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass(frozen=True)
class OperatingPoint:
    precision: float
    recall: float
    f1: float
    threshold: float


def f1_optimal_point(scores, labels) -> OperatingPoint:
    """Best-F1 threshold (alarm when ``score >= threshold``); ties go to the higher threshold."""
    s, y = _check(scores, labels)
    thresholds, tp, fp = _descending_counts(s, y)
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    # 2 TP / (TP + FP + P) is one correctly rounded division, so equal F1 values tie exactly
    f1 = 2 * tp / (tp + fp + y.sum())
    # thresholds descend, so argmax returns the highest threshold among ties
    k = int(np.argmax(f1))
    return OperatingPoint(float(precision[k]), float(recall[k]), float(f1[k]), float(thresholds[k]))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) at every distinct threshold, starting from (0, 0)."""
    s, y = _check(scores, labels)
    _, tp, fp = _descending_counts(s, y)
    return np.r_[0.0, fp / (~y).sum()], np.r_[0.0, tp / y.sum()]


def pr_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at every distinct threshold."""
    s, y = _check(scores, labels)
    _, tp, fp = _descending_counts(s, y)
    return tp / y.sum(), tp / (tp + fp)


def roc_on_grid(scores, labels, grid: np.ndarray) -> np.ndarray:
    """TPR of the ROC step curve sampled at the FPR values in ``grid``."""
    fpr, tpr = roc_curve(scores, labels)
    idx = np.searchsorted(fpr, grid, side="right") - 1
    return tpr[idx]


def pr_on_grid(scores, labels, grid: np.ndarray) -> np.ndarray:
    """Interpolated precision (best precision at recall >= r) on a recall grid."""
    recall, precision = pr_curve(scores, labels)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, grid, side="left")
    idx = np.minimum(idx, recall.size - 1)
    return envelope[idx]


@dataclass(frozen=True)
class LatencySummary:
    mean: float
    median: float
    std: float
    p5: float
    p95: float
    detection_rate: float
    detected: int
    streams: int

    def to_dict(self) -> dict:
        return asdict(self)


def latency_stats(
    alarm_frames: Sequence[int | None], onsets: Sequence[int], horizon: int
) -> LatencySummary:
    """Latency moments over streams that alarm within ``horizon`` frames of onset.

    Latency is ``alarm - onset`` clamped at zero. Streams without an alarm in
    that window only lower the detection rate. Std is the population value;
    percentiles interpolate linearly.
    """
    if len(alarm_frames) != len(onsets):
        raise ValueError(f"{len(alarm_frames)} alarm entries for {len(onsets)} onsets")
    latencies = []
    for alarm, onset in zip(alarm_frames, onsets):
        if alarm is None:
            continue
        lat = max(0, int(alarm) - int(onset))
        if lat < horizon:
            latencies.append(lat)
    n = len(onsets)
    rate = len(latencies) / n if n else float("nan")
    if not latencies:
        nan = float("nan")
        return LatencySummary(nan, nan, nan, nan, nan, rate, 0, n)
    lat = np.asarray(latencies, dtype=float)
    p5, med, p95 = np.percentile(lat, [5, 50, 95])
    return LatencySummary(
        float(lat.mean()), float(med), float(lat.std()), float(p5), float(p95), rate, lat.size, n
    )


def first_alarm_at_or_after(g: np.ndarray, threshold: float, onset: int) -> int | None:
    hits = np.flatnonzero(np.asarray(g)[onset:] > threshold)
    return int(hits[0]) + onset if hits.size else None
