"""Signal-processing front-end: anti-alias filtering, decimation, spline
upsampling, and the non-overlapping power spectrogram.

All functions take and return plain 1-D float64 numpy arrays of samples;
sample-rate bookkeeping lives with the clip containers in :mod:`audiosr.data`.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "FIR_TAPS",
    "WINDOW_LEN",
    "NUM_BINS",
    "design_lowpass",
    "lowpass_fir",
    "decimate",
    "spline_upsample",
    "stft_mag_sq",
    "spectrogram_db",
]

FIR_TAPS = 65
WINDOW_LEN = 2048
NUM_BINS = WINDOW_LEN // 2 + 1
SPECTRAL_FLOOR = 1e-10


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D sample array, got shape {x.shape}")
    return x


def design_lowpass(cutoff: float, num_taps: int = FIR_TAPS) -> np.ndarray:
    """Hamming-windowed sinc lowpass with unity DC gain.

    ``cutoff`` is a fraction of Nyquist in (0, 1).
    """
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must be in (0, 1) as a fraction of Nyquist, got {cutoff}")
    if num_taps % 2 == 0:
        raise ValueError("tap count must be odd for a zero-phase filter")
    n = np.arange(num_taps) - (num_taps - 1) / 2
    taps = cutoff * np.sinc(cutoff * n) * np.hamming(num_taps)
    return taps / taps.sum()


def lowpass_fir(x, cutoff: float) -> np.ndarray:
    """Zero-phase FIR lowpass; reflect boundary, output length = input length."""
    x = _as_samples(x)
    taps = design_lowpass(cutoff)
    pad = FIR_TAPS // 2
    if len(x) < pad + 1:
        raise ValueError(f"signal too short to filter: {len(x)} samples")
    return np.convolve(np.pad(x, pad, mode="reflect"), taps, mode="valid")


def decimate(x, r: int) -> np.ndarray:
    """Keep samples at indices 0, r, 2r, ...  Caller filters first."""
    r = int(r)
    if r < 2:
        raise ValueError(f"decimation factor must be >= 2, got {r}")
    return _as_samples(x)[::r].copy()


def spline_upsample(x, r: int) -> np.ndarray:
    """Natural cubic spline through (i*r, x_i) evaluated on the integer grid.

    Output length is exactly r*len(x); the tail past the last knot continues
    linearly with the spline's end slope.
    """
    r = int(r)
    if r < 2:
        raise ValueError(f"upsampling factor must be >= 2, got {r}")
    x = _as_samples(x)
    n = len(x)
    if n < 3:
        raise ValueError(f"need at least 3 samples to fit a spline, got {n}")
    spline = CubicSpline(np.arange(n) * r, x, bc_type="natural")
    last = (n - 1) * r
    out = np.empty(n * r, dtype=np.float64)
    out[: last + 1] = spline(np.arange(last + 1))
    tail = np.arange(last + 1, n * r)
    out[last + 1 :] = x[-1] + spline(last, 1) * (tail - last)
    return out


def stft_mag_sq(x) -> np.ndarray:
    """Power spectrogram over non-overlapping rectangular windows.

    Returns a (windows, 1025) array of |X|^2; a trailing partial window is
    dropped.
    """
    x = _as_samples(x)
    if len(x) < WINDOW_LEN:
        raise ValueError(f"signal shorter than one {WINDOW_LEN}-sample window: {len(x)}")
    count = len(x) // WINDOW_LEN
    frames = x[: count * WINDOW_LEN].reshape(count, WINDOW_LEN)
    spectrum = np.fft.rfft(frames, axis=1)
    return spectrum.real**2 + spectrum.imag**2


def spectrogram_db(x) -> np.ndarray:
    """Log-power spectrogram, 10*log10(mag_sq + floor), shape (windows, bins)."""
    return 10.0 * np.log10(stft_mag_sq(x) + SPECTRAL_FLOOR)
