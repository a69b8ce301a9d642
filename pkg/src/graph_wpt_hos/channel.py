"""Nominal graph signals, Gamma anomalies on a graph mode, and the fading channel.

Generators accept a single window or draw a batch (``count``), returning
arrays shaped ``(M, L)`` or ``(count, M, L)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph_spectral import LaplacianSpectrum, gft, igft
from .seeding import as_generator


def lowpass_kernel(lam: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + lam)


def flat_kernel(lam: np.ndarray) -> np.ndarray:
    return np.ones_like(lam)


KERNELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "lowpass": lowpass_kernel,
    "flat": flat_kernel,
}


@dataclass(frozen=True)
class SignalModelParams:
    kernel: str = "lowpass"
    signal_power_target: float = 1.0

    def smoothness(self, eigenvalues: np.ndarray) -> np.ndarray:
        g = KERNELS[self.kernel](np.asarray(eigenvalues, dtype=float))
        if np.any(g <= 0):
            raise ValueError("spectral kernel must be positive on every eigenvalue")
        return g


@dataclass(frozen=True)
class AnomalyParams:
    shape_alpha: float = 2.0
    scale_beta: float = 1.5
    duration_fraction: float = 0.25
    target_mode: int | None = None  # None: highest graph frequency
    onset_policy: str = "random"  # or "fixed"
    fixed_onset: int = 0
    center: bool = False

    def __post_init__(self) -> None:
        if self.shape_alpha <= 0 or self.scale_beta <= 0:
            raise ValueError("Gamma shape and scale must be positive")
        if not 0 < self.duration_fraction <= 1:
            raise ValueError(f"duration_fraction must lie in (0, 1], got {self.duration_fraction}")
        if self.onset_policy not in ("random", "fixed"):
            raise ValueError(f"unknown onset policy {self.onset_policy!r}")

    def duration(self, length: int) -> int:
        return int(np.floor(self.duration_fraction * length + 1e-9))


@dataclass(frozen=True)
class ChannelParams:
    fading_variance: float = 1.0
    snr_db: float = 20.0

    def __post_init__(self) -> None:
        if self.fading_variance <= 0:
            raise ValueError(f"fading variance must be > 0, got {self.fading_variance}")

    def noise_variance(self, signal_power: float | np.ndarray) -> float | np.ndarray:
        """Noise variance for a given mean per-sample signal power (SNR on the faded signal)."""
        return signal_power * self.fading_variance / 10.0 ** (self.snr_db / 10.0)


def generate_nominal(
    spectrum: LaplacianSpectrum,
    length: int,
    params: SignalModelParams,
    seed,
    count: int | None = None,
) -> np.ndarray:
    """Smooth Gaussian graph signal ``c * U diag(g(lambda)) W``.

    ``c`` is fixed analytically so the expected per-node variance equals
    ``signal_power_target``.
    """
    rng = as_generator(seed)
    m = spectrum.node_count
    shape = (m, length) if count is None else (count, m, length)
    w = rng.standard_normal(shape)
    g = params.smoothness(spectrum.eigenvalues)
    c = np.sqrt(params.signal_power_target * m / np.sum(g * g))
    return igft(spectrum, (c * g)[:, None] * w)


def inject_anomaly(
    x0: np.ndarray,
    spectrum: LaplacianSpectrum,
    params: AnomalyParams,
    seed,
    alpha: float | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | int]:
    """Add i.i.d. Gamma bursts to one graph mode over a contiguous interval.

    ``alpha`` overrides the shape (scalar, or one value per window in a batch).
    Returns the perturbed signal and the onset sample(s).
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 2
    batch = x0[None] if single else x0
    n, m, length = batch.shape
    dur = params.duration(length)
    if dur < 1:
        raise ValueError(f"anomaly duration {params.duration_fraction} * {length} is below one sample")
    rng = as_generator(seed)
    if params.onset_policy == "random":
        onsets = rng.integers(0, length - dur + 1, size=n)
    else:
        if not 0 <= params.fixed_onset <= length - dur:
            raise ValueError(f"fixed onset {params.fixed_onset} does not fit a {dur}-sample burst")
        onsets = np.full(n, params.fixed_onset)
    shape_a = np.broadcast_to(params.shape_alpha if alpha is None else alpha, (n,))
    eta = rng.gamma(shape_a[:, None], params.scale_beta, size=(n, dur))
    if params.center:
        eta = eta - (shape_a * params.scale_beta)[:, None]
    mode = m - 1 if params.target_mode is None else params.target_mode
    s = gft(spectrum, batch)
    cols = onsets[:, None] + np.arange(dur)[None, :]
    s[np.arange(n)[:, None], mode, cols] += eta
    out = igft(spectrum, s)
    if single:
        return out[0], int(onsets[0])
    return out, onsets


def rayleigh_gains(shape, fading_variance: float, seed) -> np.ndarray:
    """Moduli of circular complex Gaussians with ``E|h|^2 = fading_variance``.

    ``|h|^2`` of a circular complex Gaussian is exponential with mean
    ``fading_variance``, so one exponential draw per gain suffices.
    """
    rng = as_generator(seed)
    return np.sqrt(fading_variance * rng.standard_exponential(shape))


def apply_channel(
    x: np.ndarray,
    params: ChannelParams,
    seed,
    noise_seed=None,
    reference: np.ndarray | None = None,
) -> np.ndarray:
    """``y = |h| * x + v`` with per-sensor, per-sample Rayleigh gains.

    Noise power follows the mean per-sample power of ``reference`` (default
    ``x`` itself), window by window. Passing the pre-injection nominal signal
    keeps the noise level blind to the anomaly. When ``noise_seed`` is given
    the noise draw uses it, so fading and noise can be replayed independently.
    """
    x = np.asarray(x, dtype=float)
    ref = x if reference is None else np.asarray(reference, dtype=float)
    rng = as_generator(seed)
    gain = rayleigh_gains(x.shape, params.fading_variance, rng)
    noise_rng = rng if noise_seed is None else as_generator(noise_seed)
    v = noise_rng.standard_normal(x.shape)
    power = np.mean(ref * ref, axis=(-2, -1), keepdims=True)
    sigma_v = np.sqrt(params.noise_variance(power))
    return gain * x + sigma_v * v
