"""PSNR, SSIM and residual-spectrum statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import UsageError, check_same_shape
from .spectral import amplitude

PSNR_CAP = 100.0
SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB, capped at 100 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    if not peak > 0:
        raise UsageError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse < peak * peak * 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(a, b, window=SSIM_WINDOW):
    """Mean SSIM over all uniform ``window x window`` windows and channels.

    Window statistics use population (1/N) moments and the usual
    constants for a unit peak.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < window:
        raise UsageError(f"image {a.shape[-2:]} smaller than the {window}x{window} window")
    wa = sliding_window_view(a, (window, window), axis=(-2, -1))
    wb = sliding_window_view(b, (window, window), axis=(-2, -1))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa * wa).mean(axis=(-2, -1)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-2, -1)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def gini(values):
    """Gini coefficient of non-negative values (0 = uniform, near 1 = one-hot)."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    total = v.sum()
    n = v.size
    if n == 0 or total <= 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    # clamp rounding noise for near-uniform inputs
    return float(min(max(np.sum((2 * ranks - n - 1) * v) / (n * total), 0.0), 1.0))


def spectrum_stats(r):
    """``(gini, flatness)`` of the DFT amplitudes of a residual.

    Flatness is the geometric over the arithmetic mean of the amplitudes,
    with amplitudes floored at ``1e-12`` times the largest one so that
    empty bins drive it towards zero. An all-zero residual gives ``(0, 1)``.
    """
    amp = amplitude(r).ravel()
    top = amp.max() if amp.size else 0.0
    if top == 0:
        return 0.0, 1.0
    floored = np.maximum(amp, 1e-12 * top)
    flatness = float(np.exp(np.mean(np.log(floored))) / np.mean(amp))
    return gini(amp), min(flatness, 1.0)


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    spectrum_gini: float
    spectrum_flatness: float

    def to_dict(self):
        return asdict(self)


def evaluate(restored, target, degraded=None):
    """Batch-averaged report. Spectrum statistics describe ``degraded - restored``
    when ``degraded`` is given, otherwise ``target - restored``."""
    restored = np.asarray(restored, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    check_same_shape(restored, target)
    if restored.ndim == 3:
        restored, target = restored[None], target[None]
        degraded = None if degraded is None else np.asarray(degraded)[None]
    ref = target if degraded is None else np.asarray(degraded, dtype=np.float64)
    clipped = np.clip(restored, 0.0, 1.0)
    stats = [spectrum_stats(ref[i] - restored[i]) for i in range(len(restored))]
    return MetricReport(
        psnr=float(np.mean([psnr(clipped[i], target[i]) for i in range(len(target))])),
        ssim=float(np.mean([ssim(clipped[i], target[i]) for i in range(len(target))])),
        spectrum_gini=float(np.mean([s[0] for s in stats])),
        spectrum_flatness=float(np.mean([s[1] for s in stats])),
    )
