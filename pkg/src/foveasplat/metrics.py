"""Image quality metrics on float images in [0, 1]."""
from __future__ import annotations

import math

import numpy as np

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, region=None) -> float:
    """Peak signal-to-noise ratio in dB for peak value 1.

    ``region`` is an optional boolean (H, W) mask.  Returns ``inf`` when the
    compared pixels are bit-identical.
    """
    a, b = _pair(a, b)
    diff = a - b
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != a.shape[:2]:
            raise ValueError("region mask must match the image height and width")
        diff = diff[region]
        if diff.size == 0:
            raise ValueError("empty region")
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _box_mean(img: np.ndarray, w: int) -> np.ndarray:
    """Mean over every w x w window (valid positions) via an integral image."""
    S = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    S[1:, 1:] = img.cumsum(0).cumsum(1)
    total = S[w:, w:] - S[:-w, w:] - S[w:, :-w] + S[:-w, :-w]
    return total / (w * w)


def ssim_map(a, b, window: int = SSIM_WINDOW, k1: float = SSIM_K1, k2: float = SSIM_K2):
    """Local SSIM of single-channel images for every window position."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < window:
        raise ValueError(f"need 2-D images with both sides >= {window}")
    c1, c2 = k1 * k1, k2 * k2
    mu_a, mu_b = _box_mean(a, window), _box_mean(b, window)
    var_a = _box_mean(a * a, window) - mu_a ** 2
    var_b = _box_mean(b * b, window) - mu_b ** 2
    cov = _box_mean(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window`` x ``window`` windows, averaged over channels.

    Window statistics are unweighted population moments; dynamic range is 1.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        return float(ssim_map(a, b, window).mean())
    return float(np.mean([ssim_map(a[..., c], b[..., c], window).mean()
                          for c in range(a.shape[2])]))
