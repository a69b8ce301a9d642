"""Higher-order statistics, per-mode energies and the fused descriptor.

Fused layout for M rows and depth J (``D = M * (3 + 2**J)``)::

    [0, M)                      temporal RMS per row
    [M, M + M*2**J)             WPT sub-band RMS, row-major (row m, band k)
    [M + M*2**J, M*(2 + 2**J))  |skewness| per row
    [M*(2 + 2**J), D)           |kurtosis| per row (non-excess)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .wavelet_packet import (
    WaveletFilterPair,
    daubechies4_filters,
    subband_energies,
    wpt_decompose_batch,
)

logger = logging.getLogger(__name__)

GAUSSIAN_SKEW = 0.0
GAUSSIAN_KURT = 3.0
_DEGENERATE_REL = 1e-12


class DegenerateSequenceError(ValueError):
    """Raised when a sequence is (numerically) constant."""


@dataclass(frozen=True)
class HosPair:
    abs_skewness: float
    abs_kurtosis: float


def feature_dimension(rows: int, depth: int) -> int:
    return rows * (3 + 2**depth)


def layout_slices(rows: int, depth: int) -> dict[str, slice]:
    """Offsets of the four blocks inside a fused vector."""
    nb = rows * 2**depth
    return {
        "energy": slice(0, rows),
        "wpt": slice(rows, rows + nb),
        "skewness": slice(rows + nb, 2 * rows + nb),
        "kurtosis": slice(2 * rows + nb, 3 * rows + nb),
    }


def _moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    centred = x - x.mean(axis=-1, keepdims=True)
    sq = centred * centred
    m2 = sq.mean(axis=-1)
    m3 = (sq * centred).mean(axis=-1)
    m4 = (sq * sq).mean(axis=-1)
    scale = np.max(np.abs(x), axis=-1)
    return m2, m3, m4, scale


def hos_features(sequence: np.ndarray) -> HosPair:
    """Absolute skewness and kurtosis from population central moments."""
    x = np.asarray(sequence, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise ValueError(f"need a 1-D sequence of length >= 4, got shape {x.shape}")
    m2, m3, m4, scale = _moments(x)
    sd = np.sqrt(m2)
    if not sd > _DEGENERATE_REL * scale or sd == 0:
        raise DegenerateSequenceError("sequence has (numerically) zero spread")
    return HosPair(float(abs(m3 / sd**3)), float(abs(m4 / m2**2)))


def hos_block(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized HOS over the last axis with Gaussian substitution for dead rows.

    Returns ``(abs_skewness, abs_kurtosis)`` shaped like ``rows.shape[:-1]``.
    """
    m2, m3, m4, scale = _moments(np.asarray(rows, dtype=float))
    sd = np.sqrt(m2)
    ok = (sd > _DEGENERATE_REL * scale) & (sd > 0)
    safe_m2 = np.where(ok, m2, 1.0)
    skew = np.where(ok, np.abs(m3 / (safe_m2 * np.sqrt(safe_m2))), GAUSSIAN_SKEW)
    kurt = np.where(ok, np.abs(m4 / (safe_m2 * safe_m2)), GAUSSIAN_KURT)
    if not ok.all():
        logger.warning("%d degenerate row(s); substituting Gaussian HOS values", int((~ok).sum()))
    return skew, kurt


def mode_energies(spectral: np.ndarray) -> np.ndarray:
    """Temporal RMS of every row."""
    s = np.asarray(spectral, dtype=float)
    return np.sqrt(np.mean(s * s, axis=-1))


def extract_features(
    spectral: np.ndarray, depth: int, filters: WaveletFilterPair | None = None
) -> np.ndarray:
    """Fused descriptor of an M x L matrix (or a stack ``(..., M, L)``).

    Rows are taken as given, so this serves GFT coefficients and raw sensor
    rows alike.
    """
    s = np.asarray(spectral, dtype=float)
    filters = filters or daubechies4_filters()
    energy = mode_energies(s)
    wpt = subband_energies(wpt_decompose_batch(s, depth, filters))
    wpt = wpt.reshape(*wpt.shape[:-2], -1)
    skew, kurt = hos_block(s)
    return np.concatenate([energy, wpt, skew, kurt], axis=-1)


def extract_features_raw(
    window: np.ndarray, depth: int, filters: WaveletFilterPair | None = None
) -> np.ndarray:
    """Same feature map on vertex-domain sensor rows (no graph projection)."""
    return extract_features(window, depth, filters)
