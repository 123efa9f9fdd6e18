"""Euler-Maruyama simulation of the diffusion view of the solver.

The solver iteration, read as a discretization with unit time step, is

    dv_t = b(t, v_t) dt - sigma(t) dW_t

with a time-only diffusion coefficient. `em_step` keeps the minus sign
on the noise term so that seed-matched comparisons against the stochastic
solver step are exact rather than merely equal in law.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .core import (DIVERGENCE_THRESHOLD, NoiseSchedule, RandomSource,
                   Trajectory, as_grid, derive_seed, gaussian_field, l2_norm,
                   sigma_at, sup_norm)


@dataclass(frozen=True)
class SDEProblem:
    """Drift, diffusion, and time grid of one simulation.

    `drift` maps (t, v) to a grid, `diffusion` maps t to a nonnegative
    scalar. The horizon must be an integer number of dt steps.
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float], float]
    horizon: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive.")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive.")
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > 1.0e-9:
            raise ValueError("horizon must be an integer multiple of dt.")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def constant_diffusion(sigma: float) -> Callable[[float], float]:
    """Time-independent diffusion coefficient."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative.")
    return lambda t: sigma


def schedule_diffusion(schedule: NoiseSchedule) -> Callable[[float], float]:
    """Diffusion that reads sigma_t from a schedule at step floor(t)."""

    def diffusion(t: float) -> float:
        step = int(np.floor(t + 1.0e-9))
        step = min(max(step, 0), schedule.steps - 1)
        return sigma_at(schedule, step)

    return diffusion


def em_step(v: np.ndarray, t: float, problem: SDEProblem,
            rng: RandomSource) -> np.ndarray:
    """One Euler-Maruyama update v + b(t, v) dt - sigma(t) sqrt(dt) xi."""
    v = as_grid(v)
    b = problem.drift(t, v)
    if not np.isfinite(b).all():
        raise FloatingPointError(f"drift produced non-finite values at t={t}.")
    sig = problem.diffusion(t)
    if sig < 0:
        raise ValueError("diffusion coefficient must be nonnegative.")
    noise = gaussian_field(rng, v.shape[0], v.shape[1], 1.0)
    return v + b * problem.dt - sig * np.sqrt(problem.dt) * noise


def simulate(problem: SDEProblem, v0: np.ndarray, seed: int) -> Trajectory:
    """Run one seeded trajectory over the full horizon.

    Stops early with the "diverged" status if an iterate's sup-norm
    crosses the divergence threshold.
    """
    v = as_grid(v0).copy()
    rng = RandomSource(seed)
    iterates = [v.copy()]
    diffs: List[float] = []
    terminated = "completed"
    for k in range(problem.n_steps):
        v_next = em_step(v, k * problem.dt, problem, rng)
        diffs.append(l2_norm(v_next - v))
        iterates.append(v_next)
        v = v_next
        if sup_norm(v) > DIVERGENCE_THRESHOLD:
            terminated = "diverged"
            break
    return Trajectory(iterates=iterates, step_diffs=diffs,
                      terminated=terminated)


@dataclass
class Ensemble:
    """A set of trajectories of the same problem from distinct seeds."""

    trajectories: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.trajectories) < 2:
            raise ValueError("an ensemble needs at least two trajectories.")
        if len(self.seeds) != len(self.trajectories):
            raise ValueError("need exactly one seed per trajectory.")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("ensemble seeds must be distinct.")
        first = self.trajectories[0].iterates[0]
        for traj in self.trajectories[1:]:
            if not np.array_equal(traj.iterates[0], first):
                raise ValueError("all trajectories must share the same v0.")

    @property
    def n_diverged(self) -> int:
        return sum(t.terminated == "diverged" for t in self.trajectories)

    def terminal_states(self) -> np.ndarray:
        """Stack of terminal iterates, shape (n_traj, h, w)."""
        return np.stack([t.terminal for t in self.trajectories])


def simulate_ensemble(problem: SDEProblem, v0: np.ndarray, n_traj: int,
                      base_seed: int, threads: int = 1) -> Ensemble:
    """Simulate `n_traj` trajectories with seeds derived from `base_seed`.

    Per-trajectory seeds are derive_seed(base_seed, i), so results are
    reproducible and independent of the worker count.
    """
    if n_traj < 2:
        raise ValueError("an ensemble needs at least two trajectories.")
    seeds = [derive_seed(base_seed, i) for i in range(n_traj)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(
                lambda s: simulate(problem, v0, s), seeds))
    else:
        trajectories = [simulate(problem, v0, s) for s in seeds]
    return Ensemble(trajectories=trajectories, seeds=seeds)
