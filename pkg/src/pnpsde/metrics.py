"""Image quality metrics: PSNR and a windowed SSIM.

Both metrics treat images as unit-range; PSNR takes an explicit peak for
other ranges. SSIM uses uniform 8x8 windows at stride 1 over all fully
contained positions, with the usual stabilizing constants K1 = 0.01 and
K2 = 0.03 relative to the peak.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import as_grid

_WINDOW = 8
_K1 = 0.01
_K2 = 0.03


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    x = as_grid(x)
    ref = as_grid(ref)
    if x.shape != ref.shape:
        raise ValueError("psnr needs images of identical shape.")
    if peak <= 0:
        raise ValueError("peak must be positive.")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity over uniform 8x8 windows, stride 1."""
    x = as_grid(x)
    ref = as_grid(ref)
    if x.shape != ref.shape:
        raise ValueError("ssim needs images of identical shape.")
    if min(x.shape) < _WINDOW:
        raise ValueError(f"ssim needs at least {_WINDOW}x{_WINDOW} images.")
    wx = sliding_window_view(x, (_WINDOW, _WINDOW))
    wy = sliding_window_view(ref, (_WINDOW, _WINDOW))
    mu_x = wx.mean(axis=(2, 3))
    mu_y = wy.mean(axis=(2, 3))
    var_x = wx.var(axis=(2, 3))
    var_y = wy.var(axis=(2, 3))
    cov = (wx * wy).mean(axis=(2, 3)) - mu_x * mu_y
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    numer = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denom = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(numer / denom))
