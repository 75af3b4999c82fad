"""Objective quality metrics and the evaluation report format."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import SPECTRAL_FLOOR, stft_mag_sq

__all__ = ["SNR_CAP", "snr", "lsd", "ClipReport", "evaluate_clip", "format_report"]

SNR_CAP = 100.0


def _pair(x, x_ref):
    x = np.asarray(x, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if x.shape != x_ref.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_ref.shape}")
    return x, x_ref


def snr(x, x_ref) -> float:
    """Signal-to-noise ratio in dB, capped at +100 for an exact match."""
    x, x_ref = _pair(x, x_ref)
    ref_energy = float(np.sum(x_ref * x_ref))
    if ref_energy == 0.0:
        raise ValueError("snr: reference signal is all zero")
    err_energy = float(np.sum((x - x_ref) ** 2))
    if err_energy == 0.0:
        return SNR_CAP
    return min(SNR_CAP, 10.0 * np.log10(ref_energy / err_energy))


def lsd(x, x_ref) -> float:
    """Log-spectral distance over non-overlapping 2048-sample power spectra.

    Per window: RMS over the 1025 one-sided bins of log10 power ratios, with
    a floor on each power so silent bins stay defined.  Averaged over windows.
    """
    x, x_ref = _pair(x, x_ref)
    p = np.maximum(stft_mag_sq(x), SPECTRAL_FLOOR)
    p_ref = np.maximum(stft_mag_sq(x_ref), SPECTRAL_FLOOR)
    log_ratio = np.log10(p / p_ref)
    per_window = np.sqrt(np.mean(log_ratio**2, axis=1))
    return float(np.mean(per_window))


@dataclass(frozen=True)
class ClipReport:
    clip_id: str
    snr_db: float
    lsd: float
    baseline_snr_db: float
    baseline_lsd: float


def evaluate_clip(sr, hr, baseline, clip_id: str = "clip") -> ClipReport:
    """Score a model output and its spline baseline against the reference."""
    return ClipReport(
        clip_id=clip_id,
        snr_db=snr(sr, hr),
        lsd=lsd(sr, hr),
        baseline_snr_db=snr(baseline, hr),
        baseline_lsd=lsd(baseline, hr),
    )


def format_report(reports) -> str:
    """One key=value line per clip plus a mean-over-clips line."""
    reports = list(reports)
    lines = []
    for r in reports:
        lines.append(
            f"clip={r.clip_id} snr_db={r.snr_db:.6f} lsd={r.lsd:.6f}"
            f" baseline_snr_db={r.baseline_snr_db:.6f} baseline_lsd={r.baseline_lsd:.6f}"
        )
    if reports:
        lines.append(
            "clip=mean"
            f" snr_db={np.mean([r.snr_db for r in reports]):.6f}"
            f" lsd={np.mean([r.lsd for r in reports]):.6f}"
            f" baseline_snr_db={np.mean([r.baseline_snr_db for r in reports]):.6f}"
            f" baseline_lsd={np.mean([r.baseline_lsd for r in reports]):.6f}"
        )
    return "\n".join(lines) + "\n"
