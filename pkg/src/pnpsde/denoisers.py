"""Denoiser family used as the regularizing half of the solver.

Each denoiser maps (image, sigma) to an image of the same shape, where
sigma is the strength the schedule asks for at the current step. The
sigma-to-parameter mappings are deliberately simple documented constants:

* gaussian-smooth: periodic Gaussian blur, std in pixels = width_scale
  * sigma * image height;
* tv-chambolle: fixed-iteration-count total-variation denoising with
  weight = weight_scale * sigma^2;
* median: sliding median whose window radius is 0, 1, or 2 depending on
  which of the two thresholds sigma crosses;
* linear-matrix: the blend x -> gain * ((1 - w) x + w A x) with
  w = min(sigma, 1) and A a fixed row-stochastic smoothing matrix. Its
  Lipschitz constant is exactly the spectral norm of the materialized
  update matrix, which makes it the ground truth for estimator checks;
* amplifier: x -> gain * x with gain > 1, a deliberately unbounded map
  used to demonstrate divergence.

`clamp_wrap` turns any denoiser into a bounded one by clipping its
output, and `check_residual_gaussianity` tests whether the residual a
denoiser leaves on a known clean image looks Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import RandomSource, as_grid, gaussian_field
from .forward_models import ConvolutionOp

DENOISER_KINDS = ("gaussian-smooth", "tv-chambolle", "median",
                  "linear-matrix", "amplifier")


class Denoiser:
    """Base class: subclasses implement `_apply` on validated input."""

    kind = "base"
    declared_bound: Optional[float] = None

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = as_grid(x)
        if sigma < 0:
            raise ValueError("sigma must be nonnegative.")
        return self._apply(x, float(sigma))

    def residual(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """What the denoiser changed: denoise(x, sigma) - x."""
        x = as_grid(x)
        return self.denoise(x, sigma) - x

    def _apply(self, x: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError


# ---- concrete denoisers --------------------------------------------------


class GaussianSmoothDenoiser(Denoiser):
    """Circular convolution with a normalized Gaussian kernel."""

    kind = "gaussian-smooth"

    def __init__(self, width_scale: float = 2.0):
        if width_scale <= 0:
            raise ValueError("width_scale must be positive.")
        self.width_scale = float(width_scale)

    def _apply(self, x, sigma):
        if sigma == 0:
            return x.copy()
        std = self.width_scale * sigma * x.shape[0]
        kernel = _periodic_gaussian(x.shape, std)
        return np.real(np.fft.ifft2(np.fft.fft2(x) * np.fft.fft2(kernel)))


def _periodic_gaussian(shape, std):
    h, w = shape
    iy = np.arange(h)
    ix = np.arange(w)
    dy = np.minimum(iy, h - iy)
    dx = np.minimum(ix, w - ix)
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    kernel = np.exp(-d2 / (2.0 * std * std))
    return kernel / kernel.sum()


class TVDenoiser(Denoiser):
    """Total-variation denoising via a fixed number of dual steps.

    Runs Chambolle's projection iteration on the dual variable for
    exactly `iterations` steps, solving

        argmin_u ||u - x||^2 / 2 + weight * TV(u)

    with weight = weight_scale * sigma^2. The fixed iteration count keeps
    the map deterministic for a given input regardless of content.
    """

    kind = "tv-chambolle"

    def __init__(self, iterations: int = 50, weight_scale: float = 1.0,
                 tau: float = 0.125):
        if iterations < 1:
            raise ValueError("iterations must be positive.")
        if weight_scale <= 0:
            raise ValueError("weight_scale must be positive.")
        if not 0 < tau <= 0.125:
            raise ValueError("tau must lie in (0, 0.125] for stability.")
        self.iterations = int(iterations)
        self.weight_scale = float(weight_scale)
        self.tau = float(tau)

    def _apply(self, x, sigma):
        weight = self.weight_scale * sigma * sigma
        if weight == 0:
            return x.copy()
        p = np.zeros((2,) + x.shape)
        for _ in range(self.iterations):
            d = _divergence(p) - x / weight
            g = _gradient(d)
            norm = np.sqrt(g[0] ** 2 + g[1] ** 2)
            p = (p + self.tau * g) / (1.0 + self.tau * norm)
        return x - weight * _divergence(p)


def _gradient(u):
    g = np.zeros((2,) + u.shape)
    g[0, :-1, :] = u[1:, :] - u[:-1, :]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    return g


def _divergence(p):
    d = np.zeros(p.shape[1:])
    d[:-1, :] += p[0, :-1, :]
    d[1:, :] -= p[0, :-1, :]
    d[:, :-1] += p[1, :, :-1]
    d[:, 1:] -= p[1, :, :-1]
    return d


class MedianDenoiser(Denoiser):
    """Sliding median with periodic boundaries.

    sigma below the first threshold keeps the image (radius 0), between
    the thresholds uses a 3x3 window, above the second a 5x5 window.
    """

    kind = "median"

    def __init__(self, thresholds=(0.05, 0.2)):
        lo, hi = float(thresholds[0]), float(thresholds[1])
        if not 0 < lo < hi:
            raise ValueError("thresholds must satisfy 0 < lo < hi.")
        self.thresholds = (lo, hi)

    def radius(self, sigma: float) -> int:
        if sigma < self.thresholds[0]:
            return 0
        if sigma < self.thresholds[1]:
            return 1
        return 2

    def _apply(self, x, sigma):
        r = self.radius(sigma)
        if r == 0:
            return x.copy()
        return ndimage.median_filter(x, size=2 * r + 1, mode="wrap")


class LinearMatrixDenoiser(Denoiser):
    """Blend with a fixed row-stochastic smoothing matrix.

    The smoothing matrix A is circular convolution with a normalized
    nonnegative kernel, so A is row-stochastic by construction. The map is

        x -> gain * ((1 - w) x + w A x),   w = min(sigma, 1),

    with gain = 1 the map is the identity at sigma = 0; gain < 1 gives a
    strictly contractive denoiser with Lipschitz constant exactly `gain`.
    """

    kind = "linear-matrix"

    def __init__(self, kernel=None, gain: float = 1.0):
        if kernel is None:
            kernel = np.full((3, 3), 1.0 / 9.0)
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.size == 0:
            raise ValueError("kernel must be a non-empty 2-D array.")
        if (kernel < 0).any() or kernel.sum() <= 0:
            raise ValueError("kernel must be nonnegative with positive sum.")
        if gain <= 0:
            raise ValueError("gain must be positive.")
        self.kernel = kernel / kernel.sum()
        self.gain = float(gain)
        self._conv = ConvolutionOp(self.kernel)
        # a 1x1 kernel is the identity; skip the FFT so the map is exact
        self._is_delta = self.kernel.shape == (1, 1)

    def _apply(self, x, sigma):
        w = min(sigma, 1.0)
        if w == 0 or self._is_delta:
            return self.gain * x
        return self.gain * ((1.0 - w) * x + w * self._conv.apply(x))

    def update_matrix(self, height: int, width: int,
                      sigma: float) -> np.ndarray:
        """Materialize the update map as an (h*w, h*w) matrix.

        Intended for small grids where the exact spectral norm of the
        map is wanted as ground truth; refuses grids above 64x64.
        """
        n = height * width
        if n > 4096:
            raise ValueError("update_matrix is limited to grids <= 64x64.")
        columns = np.zeros((n, n))
        for j in range(n):
            impulse = np.zeros(n)
            impulse[j] = 1.0
            columns[:, j] = self._apply(
                impulse.reshape(height, width), float(sigma)).ravel()
        return columns


def identity_denoiser() -> LinearMatrixDenoiser:
    """The do-nothing denoiser, D(x, sigma) = x for every sigma."""
    return LinearMatrixDenoiser(kernel=[[1.0]])


class AmplifierDenoiser(Denoiser):
    """Unbounded counterexample, D(x, sigma) = gain * x with gain > 1."""

    kind = "amplifier"

    def __init__(self, gain: float = 1.5):
        if gain <= 1:
            raise ValueError("amplifier gain must exceed 1.")
        self.gain = float(gain)

    def _apply(self, x, sigma):
        return self.gain * x


class ClampedDenoiser(Denoiser):
    """Wrapper clipping another denoiser's output into [lo, hi]."""

    kind = "clamped"

    def __init__(self, inner: Denoiser, lo: float, hi: float):
        if not lo < hi:
            raise ValueError("clamp bounds must satisfy lo < hi.")
        self.inner = inner
        self.lo = float(lo)
        self.hi = float(hi)
        self.declared_bound = max(abs(self.lo), abs(self.hi))

    def _apply(self, x, sigma):
        return np.clip(self.inner.denoise(x, sigma), self.lo, self.hi)


def clamp_wrap(inner: Denoiser, lo: float, hi: float) -> ClampedDenoiser:
    """Bound a denoiser's output range by clipping into [lo, hi]."""
    return ClampedDenoiser(inner, lo, hi)


# ---- residual statistics --------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    """Moment summary of the residual a denoiser leaves on a clean image."""

    skewness: float
    excess_kurtosis: float
    sigma_ratio: float
    mean_abs: float
    passed: bool


def check_residual_gaussianity(denoiser: Denoiser, clean: np.ndarray,
                               sigma: float, rng: RandomSource,
                               skew_tol: float = 0.5,
                               kurt_tol: float = 1.0) -> ResidualReport:
    """Moment-based check that `denoised(clean + noise) - clean` is Gaussian.

    Adds N(0, sigma^2) noise to the clean image, denoises it, and computes
    skewness and excess kurtosis of the pixel residual. The check passes
    when |skewness| < skew_tol and |excess kurtosis| < kurt_tol. A residual
    that is numerically zero passes vacuously.
    """
    clean = as_grid(clean)
    if min(clean.shape) < 32:
        raise ValueError("residual statistics need at least a 32x32 image.")
    if clean.max() == clean.min():
        raise ValueError("residual statistics are undefined for a "
                         "constant image.")
    if sigma <= 0:
        raise ValueError("sigma must be positive.")
    noisy = clean + gaussian_field(rng, *clean.shape, sigma)
    residual = (denoiser.denoise(noisy, sigma) - clean).ravel()
    mean_abs = float(np.mean(np.abs(residual)))
    centred = residual - residual.mean()
    std = float(np.sqrt(np.mean(centred ** 2)))
    if std < 1.0e-12:
        return ResidualReport(0.0, 0.0, std / sigma, mean_abs, True)
    skew = float(np.mean(centred ** 3) / std ** 3)
    kurt = float(np.mean(centred ** 4) / std ** 4 - 3.0)
    passed = abs(skew) < skew_tol and abs(kurt) < kurt_tol
    return ResidualReport(skew, kurt, std / sigma, mean_abs, passed)
