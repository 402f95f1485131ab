"""Fidelity metrics (PSNR, SSIM on luma), error heatmaps, runtime benchmark.

Metrics are evaluated on reconstructed full frames; SSIM follows the
standard windowed definition (11-tap Gaussian, sigma 1.5, K1=0.01,
K2=0.03) on BT.601 luma and is verified against a direct per-window
brute-force implementation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ShapeError

PSNR_INF = math.inf
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window % 2 == 0 or self.window < 1:
            raise ShapeError(f"SSIM window must be odd, got {self.window}")
        if min(self.sigma, self.k1, self.k2, self.dynamic_range) <= 0:
            raise ShapeError("SSIM constants must be positive")


def _pixels(x):
    return x.pixels if hasattr(x, "pixels") else np.asarray(x, dtype=np.float64)


def _luma(arr):
    return arr @ _LUMA if arr.ndim == 3 else arr


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / MSE); identical inputs give the +inf sentinel."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeError(f"PSNR inputs differ in shape: {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(cfg):
    half = cfg.window // 2
    g = np.exp(-np.arange(-half, half + 1) ** 2 / (2 * cfg.sigma**2))
    g /= g.sum()
    return g


def ssim(a, b, cfg=SsimConfig()):
    """Mean local SSIM over Gaussian windows, computed on luma."""
    pa, pb = _luma(_pixels(a)), _luma(_pixels(b))
    if pa.shape != pb.shape:
        raise ShapeError(f"SSIM inputs differ in shape: {pa.shape} vs {pb.shape}")
    if min(pa.shape) < cfg.window:
        raise ShapeError(f"image {pa.shape} smaller than SSIM window {cfg.window}")
    g = _gaussian_kernel(cfg)

    def filt(x):
        # valid-region separable Gaussian filtering
        y = ndimage.correlate1d(x, g, axis=0, mode="constant")
        y = ndimage.correlate1d(y, g, axis=1, mode="constant")
        half = cfg.window // 2
        return y[half : x.shape[0] - half, half : x.shape[1] - half]

    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_a = filt(pa)
    mu_b = filt(pb)
    var_a = filt(pa * pa) - mu_a * mu_a
    var_b = filt(pb * pb) - mu_b * mu_b
    cov = filt(pa * pb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_bruteforce(a, b, cfg=SsimConfig()):
    """Direct per-window SSIM; the oracle the fast implementation must match."""
    pa, pb = _luma(_pixels(a)), _luma(_pixels(b))
    if pa.shape != pb.shape:
        raise ShapeError(f"SSIM inputs differ in shape: {pa.shape} vs {pb.shape}")
    if min(pa.shape) < cfg.window:
        raise ShapeError(f"image {pa.shape} smaller than SSIM window {cfg.window}")
    g1 = _gaussian_kernel(cfg)
    w2 = np.outer(g1, g1)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    k = cfg.window
    h, w = pa.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            wa = pa[i : i + k, j : j + k]
            wb = pb[i : i + k, j : j + k]
            mu_a = (w2 * wa).sum()
            mu_b = (w2 * wb).sum()
            var_a = (w2 * wa * wa).sum() - mu_a**2
            var_b = (w2 * wb * wb).sum() - mu_b**2
            cov = (w2 * wa * wb).sum() - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def error_heatmap(a, b):
    """Per-pixel mean absolute channel error, normalized and colormapped.

    Black means zero error; the maximum error maps to full intensity
    through a black-red-yellow-white ramp.
    """
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeError(f"heatmap inputs differ in shape: {pa.shape} vs {pb.shape}")
    err = np.abs(pa - pb).mean(axis=2)
    peak = err.max()
    if peak > 0:
        err = err / peak
    out = np.zeros(err.shape + (3,), dtype=np.float64)
    out[..., 0] = np.clip(err * 3.0, 0, 1)
    out[..., 1] = np.clip(err * 3.0 - 1.0, 0, 1)
    out[..., 2] = np.clip(err * 3.0 - 2.0, 0, 1)
    return out


def bench_runtime(run_window, repetitions=20, warmup=1):
    """Time a 6-field-window callable; returns per-window/per-frame stats (ms).

    ``run_window`` executes one full 6-field deinterlacing pass.  Warmup
    runs are excluded; the report carries the median and the median
    absolute deviation across repetitions.
    """
    for _ in range(warmup):
        run_window()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        run_window()
        samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.array(samples)
    med = float(np.median(arr))
    mad = float(np.median(np.abs(arr - med)))
    return {
        "samples_ms": samples,
        "window_ms_median": med,
        "window_ms_mad": mad,
        "frame_ms_median": med / 6.0,
    }
