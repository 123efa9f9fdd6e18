"""Linear measurement operators and the data-fidelity proximal map.

Four operator kinds cover the restoration tasks: identity (denoising),
pixel mask (inpainting), circular convolution (deblurring), and block
downsampling (super-resolution). Every operator knows its adjoint, and
`prox_fidelity` solves

    argmin_x  ||y - M x||^2 / 2  +  ||x - v||^2 / (2 lam^2)

in closed form, i.e. (M^T M + I / lam^2) x = M^T y + v / lam^2. The
normal matrix is diagonal for identity and mask, diagonal in the Fourier
basis for circular convolution, and block rank-1 for downsampling, so no
iterative solver is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RandomSource, as_grid, gaussian_field

OPERATOR_KINDS = ("identity", "mask", "convolution", "downsample")


# ---- operators ----------------------------------------------------------


class MeasurementOp:
    """Base class for the linear forward operators."""

    kind = "base"

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prox(self, v: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
        raise NotImplementedError

    def validate_pair(self, v: np.ndarray, y: np.ndarray) -> None:
        """Check that v is a valid input shape and y a valid output shape."""
        raise NotImplementedError


class IdentityOp(MeasurementOp):
    """Direct observation, M = I."""

    kind = "identity"

    def apply(self, x):
        return as_grid(x).copy()

    def adjoint(self, y):
        return as_grid(y).copy()

    def prox(self, v, y, lam):
        lam2 = lam * lam
        return (lam2 * y + v) / (lam2 + 1.0)

    def validate_pair(self, v, y):
        if v.shape != y.shape:
            raise ValueError("identity operator needs matching shapes.")


class MaskOp(MeasurementOp):
    """Pixelwise observation mask; unobserved pixels read zero."""

    kind = "mask"

    def __init__(self, mask):
        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.size == 0:
            raise ValueError("mask must be a non-empty 2-D array.")
        self.mask = mask.astype(bool)
        if not self.mask.any():
            raise ValueError("mask must observe at least one pixel.")

    def apply(self, x):
        x = as_grid(x)
        self._check_shape(x)
        return np.where(self.mask, x, 0.0)

    def adjoint(self, y):
        return self.apply(y)

    def prox(self, v, y, lam):
        lam2 = lam * lam
        observed = (lam2 * y + v) / (lam2 + 1.0)
        return np.where(self.mask, observed, v)

    def validate_pair(self, v, y):
        self._check_shape(v)
        self._check_shape(y)

    def _check_shape(self, grid):
        if grid.shape != self.mask.shape:
            raise ValueError(
                f"grid shape {grid.shape} does not match mask "
                f"shape {self.mask.shape}.")


class ConvolutionOp(MeasurementOp):
    """Circular convolution with a small real kernel.

    The kernel is anchored at its centre element and applied with
    periodic boundary handling, which keeps the operator diagonal in
    the Fourier basis.
    """

    kind = "convolution"

    def __init__(self, kernel):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.size == 0:
            raise ValueError("kernel must be a non-empty 2-D array.")
        if not np.isfinite(kernel).all():
            raise ValueError("kernel must be finite.")
        self.kernel = kernel

    def _transfer(self, shape):
        kh, kw = self.kernel.shape
        if kh > shape[0] or kw > shape[1]:
            raise ValueError("kernel does not fit inside the image.")
        pad = np.zeros(shape)
        pad[:kh, :kw] = self.kernel
        pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
        return np.fft.fft2(pad)

    def apply(self, x):
        x = as_grid(x)
        transfer = self._transfer(x.shape)
        return np.real(np.fft.ifft2(np.fft.fft2(x) * transfer))

    def adjoint(self, y):
        y = as_grid(y)
        transfer = self._transfer(y.shape)
        return np.real(np.fft.ifft2(np.fft.fft2(y) * np.conj(transfer)))

    def prox(self, v, y, lam):
        inv_lam2 = 1.0 / (lam * lam)
        transfer = self._transfer(v.shape)
        numer = np.conj(transfer) * np.fft.fft2(y) + np.fft.fft2(v) * inv_lam2
        denom = np.abs(transfer) ** 2 + inv_lam2
        return np.real(np.fft.ifft2(numer / denom))

    def validate_pair(self, v, y):
        if v.shape != y.shape:
            raise ValueError("convolution operator needs matching shapes.")


class DownsampleOp(MeasurementOp):
    """Block averaging over factor x factor cells."""

    kind = "downsample"

    def __init__(self, factor: int):
        if int(factor) != factor or factor < 1:
            raise ValueError("factor must be a positive integer.")
        self.factor = int(factor)

    def _check_input(self, grid):
        f = self.factor
        if grid.shape[0] % f or grid.shape[1] % f:
            raise ValueError(
                f"grid shape {grid.shape} is not divisible by factor {f}.")

    def apply(self, x):
        x = as_grid(x)
        self._check_input(x)
        f = self.factor
        h, w = x.shape
        return x.reshape(h // f, f, w // f, f).mean(axis=(1, 3))

    def adjoint(self, y):
        y = as_grid(y)
        f = self.factor
        return np.kron(y, np.ones((f, f))) / (f * f)

    def prox(self, v, y, lam):
        # M^T M is (1/f^4) * (all-ones) within each block, so the normal
        # equations invert blockwise by Sherman-Morrison.
        f = self.factor
        c = 1.0 / (lam * lam)
        a = 1.0 / float(f) ** 4
        beta = a / (c + a * f * f)
        r = self.adjoint(y) + c * v
        block_sums = np.kron(_block_sum(r, f), np.ones((f, f)))
        return (r - beta * block_sums) / c

    def validate_pair(self, v, y):
        self._check_input(v)
        f = self.factor
        if y.shape != (v.shape[0] // f, v.shape[1] // f):
            raise ValueError(
                f"observation shape {y.shape} does not match input "
                f"shape {v.shape} at factor {f}.")


def _block_sum(grid, factor):
    h, w = grid.shape
    return grid.reshape(h // factor, factor,
                        w // factor, factor).sum(axis=(1, 3))


# ---- observations -------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """A measured image y together with the operator that produced it."""

    y: np.ndarray
    op: MeasurementOp
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "y", as_grid(self.y))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative.")


def degrade(op: MeasurementOp, x: np.ndarray, sigma: float,
            rng: Optional[RandomSource] = None) -> Observation:
    """Apply the forward model and add N(0, sigma^2) measurement noise."""
    clean = op.apply(as_grid(x))
    if sigma > 0:
        if rng is None:
            raise ValueError("noisy degradation needs a random source.")
        clean = clean + gaussian_field(rng, *clean.shape, sigma)
    return Observation(y=clean, op=op, noise_sigma=float(sigma))


def prox_fidelity(obs: Observation, v: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form minimizer of ||y - Mx||^2/2 + ||x - v||^2/(2 lam^2)."""
    if lam <= 0:
        raise ValueError("lam must be positive.")
    v = as_grid(v)
    obs.op.validate_pair(v, obs.y)
    return obs.op.prox(v, obs.y, lam)


def random_mask(height: int, width: int, fraction: float,
                seed: int) -> np.ndarray:
    """Deterministic boolean mask observing roughly `fraction` of pixels."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1].")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    mask = gen.random((height, width)) < fraction
    if not mask.any():
        mask[0, 0] = True
    return mask
