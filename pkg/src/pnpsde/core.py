"""Shared primitives: image grids, noise schedules, solver config, RNG.

Everything downstream (forward models, denoisers, the solver loop, the
SDE simulator) builds on the small set of types and helpers defined here.
Image grids are plain 2-D float64 numpy arrays; `as_grid` is the single
validation gate for values coming from outside the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

# Iterates whose sup-norm crosses this value terminate a run with the
# "diverged" status. Images are unit-range, so 1e3 is far outside any
# sane trajectory while still well inside float64 territory.
DIVERGENCE_THRESHOLD = 1.0e3

SCHEDULE_KINDS = ("constant", "linear-decay", "exponential-decay")
MODES = ("deterministic", "stochastic")
VARIANTS = ("simplified", "admm")
TERMINATION_STATES = ("completed", "diverged", "converged-early")

_MASK64 = (1 << 64) - 1


# ---- image grids -------------------------------------------------------


def as_grid(data) -> np.ndarray:
    """Validate `data` as an image grid and return it as 2-D float64.

    Raises ValueError for non-2-D, empty, or non-finite input.
    """
    grid = np.asarray(data, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("image grids must be 2-D arrays.")
    if grid.size == 0:
        raise ValueError("image grids must be non-empty.")
    if not np.isfinite(grid).all():
        raise ValueError("image grids must contain only finite values.")
    return grid


def l2_norm(grid: np.ndarray) -> float:
    """Euclidean norm of a grid viewed as a flat vector."""
    return float(np.sqrt(np.sum(np.square(grid))))


def sup_norm(grid: np.ndarray) -> float:
    """Largest absolute pixel value."""
    return float(np.max(np.abs(grid)))


# ---- seeded randomness --------------------------------------------------


def _splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Derive the seed for stream `index` from a base seed.

    The base seed is XORed with a splitmix64 hash of the index, so the
    per-trajectory streams of an ensemble are decorrelated but fully
    determined by (base_seed, index).
    """
    if index < 0:
        raise ValueError("stream index must be nonnegative.")
    return (int(base_seed) ^ _splitmix64(int(index))) & _MASK64


class RandomSource:
    """Deterministic Gaussian stream backed by the Philox counter generator.

    Uniform words come from Philox-4x64-10 keyed directly by the seed.
    Each Gaussian deviate consumes exactly two consecutive uniforms through
    the Box-Muller cosine branch::

        z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)

    so the stream can be reproduced in any environment that provides the
    same counter generator, independent of library-internal normal
    samplers. `position` counts Gaussian deviates drawn so far.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError("seed must be an integer.")
        if not 0 <= int(seed) <= _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer.")
        self.seed = int(seed)
        self.position = 0
        self._uniforms = np.random.Generator(np.random.Philox(key=self.seed))

    def standard_normal(self, count: int) -> np.ndarray:
        """Draw `count` N(0, 1) deviates, advancing the stream by `count`."""
        if count < 0:
            raise ValueError("draw count must be nonnegative.")
        u = self._uniforms.random(2 * count)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        angle = (2.0 * np.pi) * u[1::2]
        self.position += count
        return radius * np.cos(angle)

    def spawn(self, index: int) -> "RandomSource":
        """Independent stream number `index` derived from this seed."""
        return RandomSource(derive_seed(self.seed, index))


def gaussian_field(rng: RandomSource, height: int, width: int,
                   sigma: float) -> np.ndarray:
    """Sample an (height, width) grid of N(0, sigma^2) pixels.

    Always consumes exactly height * width deviates from `rng`, including
    the sigma = 0 case, which returns the zero grid.
    """
    if height < 1 or width < 1:
        raise ValueError("field dimensions must be positive.")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative.")
    draws = rng.standard_normal(height * width)
    return sigma * draws.reshape(height, width)


# ---- noise schedules ----------------------------------------------------


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step denoiser strength sigma_t for a run of `steps` steps.

    kind "constant" holds sigma0; "linear-decay" interpolates sigma0 to
    sigmaT; "exponential-decay" follows sigma0 * (sigmaT / sigma0)^(t/(T-1)).
    """

    kind: str
    sigma0: float
    sigmaT: float = 0.0
    steps: int = 1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}.")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive.")
        if self.sigmaT < 0:
            raise ValueError("sigmaT must be nonnegative.")
        if self.kind == "exponential-decay" and self.sigmaT == 0:
            raise ValueError("exponential-decay requires sigmaT > 0.")
        if self.steps < 1:
            raise ValueError("steps must be at least 1.")


def sigma_at(schedule: NoiseSchedule, step: int) -> float:
    """Evaluate sigma_t for integer step t in [0, schedule.steps)."""
    if not 0 <= step < schedule.steps:
        raise IndexError(
            f"step {step} outside schedule range [0, {schedule.steps}).")
    if schedule.kind == "constant" or schedule.steps == 1:
        return schedule.sigma0
    frac = step / (schedule.steps - 1)
    if schedule.kind == "linear-decay":
        return schedule.sigma0 + (schedule.sigmaT - schedule.sigma0) * frac
    return schedule.sigma0 * (schedule.sigmaT / schedule.sigma0) ** frac


# ---- solver configuration -----------------------------------------------


@dataclass(frozen=True)
class PnPConfig:
    """Parameters of one plug-and-play run.

    gamma and lam set the data-fidelity coupling; the derived base sigma
    sqrt(gamma) * lam plays the role of the assumed noise level, and the
    experiment ratio alpha = base_sigma^2 / gamma equals lam^2. `schedule`
    drives the per-step denoiser strength and must cover max_iters steps.
    In stochastic mode, `inject` overrides the schedule used for the
    injected noise (None means reuse `schedule`).
    """

    gamma: float
    lam: float
    schedule: NoiseSchedule
    max_iters: int
    mode: str = "deterministic"
    seed: int = 0
    variant: str = "simplified"
    inject: Optional[NoiseSchedule] = None
    eps_stop: float = 1.0e-6
    patience: int = 5

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive.")
        if self.lam <= 0:
            raise ValueError("lam must be positive.")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1.")
        if self.schedule.steps < self.max_iters:
            raise ValueError("schedule must cover max_iters steps.")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}.")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}.")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in an unsigned 64-bit integer.")
        if self.inject is not None and self.inject.steps < self.max_iters:
            raise ValueError("inject schedule must cover max_iters steps.")
        if self.eps_stop <= 0:
            raise ValueError("eps_stop must be positive.")
        if self.patience < 1:
            raise ValueError("patience must be at least 1.")

    @property
    def base_sigma(self) -> float:
        """Assumed noise level sqrt(gamma) * lam."""
        return float(np.sqrt(self.gamma) * self.lam)

    @property
    def alpha_ratio(self) -> float:
        """Experiment ratio alpha with base_sigma^2 = alpha * gamma."""
        return float(self.lam ** 2)

    @classmethod
    def from_alpha(cls, alpha: float, gamma: float = 1.0,
                   **kwargs) -> "PnPConfig":
        """Build a config from the ratio alpha, setting lam = sqrt(alpha)."""
        if alpha <= 0:
            raise ValueError("alpha must be positive.")
        return cls(gamma=gamma, lam=float(np.sqrt(alpha)), **kwargs)

    def with_seed(self, seed: int) -> "PnPConfig":
        return replace(self, seed=seed)


# ---- trajectories --------------------------------------------------------


@dataclass(frozen=True)
class StepMetrics:
    """Image-quality readings attached to one iterate."""

    step: int
    psnr: float
    ssim: float


@dataclass
class Trajectory:
    """Recorded run: iterates v^0..v^T plus per-step diagnostics.

    step_diffs[t] is the l2 distance between iterates t and t+1, so there
    is always exactly one fewer diff than iterates. `metrics` is filled
    only when the caller supplied a reference image.
    """

    iterates: list = field(default_factory=list)
    step_diffs: list = field(default_factory=list)
    terminated: str = "completed"
    metrics: Optional[list] = None

    def __post_init__(self):
        if self.terminated not in TERMINATION_STATES:
            raise ValueError(f"unknown termination state {self.terminated!r}.")
        if len(self.iterates) == 0:
            raise ValueError("a trajectory must hold at least one iterate.")
        if len(self.step_diffs) != len(self.iterates) - 1:
            raise ValueError("need exactly one step diff per transition.")

    @property
    def terminal(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1
