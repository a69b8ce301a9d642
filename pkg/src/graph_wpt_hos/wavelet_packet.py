"""Periodic wavelet packet analysis with the 4-tap Daubechies filter pair.

All routines operate on the last axis, so a whole stack of windows
(``(..., L)``) is decomposed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .graph_spectral import ContractViolation


@dataclass(frozen=True)
class WaveletFilterPair:
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def length(self) -> int:
        return self.lowpass.shape[0]


def daubechies4_filters() -> WaveletFilterPair:
    """Four-tap Daubechies scaling filter (two vanishing moments) and its QMF."""
    s3 = np.sqrt(3.0)
    low = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * np.sqrt(2.0))
    high = np.array([(-1) ** k * low[3 - k] for k in range(4)])
    low.setflags(write=False)
    high.setflags(write=False)
    return WaveletFilterPair(low, high)


def gray_code(n: int) -> int:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class SubbandSet:
    """Leaves of a depth-``depth`` packet tree.

    ``bands[..., k, :]`` holds sub-band ``k``. With ``ordering == "frequency"``
    the index increases with the band's centre frequency; ``"natural"`` keeps
    the filter-tree order (low branch first at every split).
    """

    depth: int
    bands: np.ndarray
    ordering: str = "frequency"

    @property
    def band_length(self) -> int:
        return self.bands.shape[-1]


def analysis_step(x: np.ndarray, filters: WaveletFilterPair) -> tuple[np.ndarray, np.ndarray]:
    """One periodic two-channel split: ``a[n] = sum_k h[k] x[(2n + k) mod N]``."""
    n = x.shape[-1]
    if n % 2:
        raise ContractViolation(f"cannot split odd length {n}")
    # polyphase form: tap k reads x[2n + k], i.e. phase k % 2 shifted by k // 2
    phases = [x[..., 0::2], x[..., 1::2]]
    lo = np.zeros(x.shape[:-1] + (n // 2,))
    hi = np.zeros_like(lo)
    for k in range(filters.length):
        tap = phases[k % 2]
        shift = k // 2
        if shift:
            tap = np.roll(tap, -shift, axis=-1)
        lo += filters.lowpass[k] * tap
        hi += filters.highpass[k] * tap
    return lo, hi


def wpt_decompose(
    signal: np.ndarray, depth: int, filters: WaveletFilterPair, ordering: str = "frequency"
) -> SubbandSet:
    """Full binary packet decomposition along the last axis.

    Both the approximation and the detail branch are split at every level,
    giving ``2**depth`` bands of ``L / 2**depth`` coefficients.
    """
    x = np.asarray(signal, dtype=float)
    length = x.shape[-1]
    if depth < 0:
        raise ContractViolation(f"depth must be >= 0, got {depth}")
    if length < 4 or length % (2**depth):
        raise ContractViolation(f"length L={length} must be >= 4 and divisible by 2**J (J={depth})")
    if ordering not in ("frequency", "natural"):
        raise ContractViolation(f"unknown band ordering {ordering!r}")
    nodes = x[..., None, :]
    for _ in range(depth):
        lo, hi = analysis_step(nodes, filters)
        # interleave so children of node p sit at 2p and 2p + 1
        nodes = np.stack([lo, hi], axis=-2).reshape(*lo.shape[:-2], -1, lo.shape[-1])
    if ordering == "frequency":
        perm = [gray_code(k) for k in range(2**depth)]
        nodes = nodes[..., perm, :]
    return SubbandSet(depth, nodes, ordering)


@lru_cache(maxsize=32)
def _operator(length: int, depth: int, low: tuple, high: tuple, ordering: str) -> np.ndarray:
    filters = WaveletFilterPair(np.array(low), np.array(high))
    basis = wpt_decompose(np.eye(length), depth, filters, ordering).bands
    op = basis.reshape(length, length)
    op.setflags(write=False)
    return op


def packet_operator(
    length: int, depth: int, filters: WaveletFilterPair, ordering: str = "frequency"
) -> np.ndarray:
    """The whole packet tree as one orthogonal ``L x L`` matrix ``W``.

    ``signal @ W`` equals the concatenated bands of :func:`wpt_decompose`;
    large batches go through one matrix product instead of the recursion.
    """
    return _operator(
        length, depth, tuple(filters.lowpass.tolist()), tuple(filters.highpass.tolist()), ordering
    )


def wpt_decompose_batch(
    signals: np.ndarray, depth: int, filters: WaveletFilterPair, ordering: str = "frequency"
) -> SubbandSet:
    """Same result as :func:`wpt_decompose`, via the cached packet operator."""
    x = np.asarray(signals, dtype=float)
    length = x.shape[-1]
    if length < 4 or length % (2**depth):
        raise ContractViolation(f"length L={length} must be >= 4 and divisible by 2**J (J={depth})")
    bands = (x @ packet_operator(length, depth, filters, ordering)).reshape(
        *x.shape[:-1], 2**depth, length >> depth
    )
    return SubbandSet(depth, bands, ordering)


def subband_energies(subbands: SubbandSet) -> np.ndarray:
    """RMS of every sub-band, ``sqrt(mean(w**2))``."""
    b = subbands.bands
    return np.sqrt(np.mean(b * b, axis=-1))
