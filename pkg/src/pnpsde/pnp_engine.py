"""The plug-and-play iteration: proximal data step plus denoiser step.

One step of the simplified variant is

    x^{t+1} = prox_fidelity(obs, v^t, lam)
    v^{t+1} = D(x^{t+1}, sigma_t)            (deterministic mode)
    v^{t+1} = D(x^{t+1}, sigma_t) - n_t      (stochastic mode)

where n_t is a Gaussian field with the injected std for step t. The
"admm" variant carries the scaled dual u through the usual three-step
update. The injected noise enters with a minus sign to share the sign
convention of `sde_sim.em_step`; the distribution is unchanged and
seed-matched comparisons between the two modules line up exactly.

The drift of the matching diffusion is b(v) = h(v) - v with
h = prox_fidelity, optionally composed with the denoiser so that one
Euler step with dt = 1 reproduces one stochastic solver step.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .core import (DIVERGENCE_THRESHOLD, PnPConfig, RandomSource, StepMetrics,
                   Trajectory, as_grid, derive_seed, gaussian_field, l2_norm,
                   sigma_at, sup_norm)
from .denoisers import Denoiser
from .forward_models import Observation, prox_fidelity
from .metrics import psnr, ssim
from .sde_sim import Ensemble


@dataclass(frozen=True)
class PnPState:
    """Solver state after step t: primal v, auxiliary x, scaled dual u."""

    v: np.ndarray
    x: np.ndarray
    u: np.ndarray
    t: int


def initial_state(v0: np.ndarray) -> PnPState:
    v0 = as_grid(v0)
    return PnPState(v=v0.copy(), x=v0.copy(), u=np.zeros_like(v0), t=0)


def drift(v: np.ndarray, obs: Observation, cfg: PnPConfig) -> np.ndarray:
    """Drift of the matching diffusion: prox_fidelity(obs, v, lam) - v."""
    v = as_grid(v)
    return prox_fidelity(obs, v, cfg.lam) - v


def make_sde_drift(obs: Observation, cfg: PnPConfig,
                   denoiser: Optional[Denoiser] = None
                   ) -> Callable[[float, np.ndarray], np.ndarray]:
    """Drift b(t, v) for the diffusion twin of this solver setup.

    Without a denoiser this is the bare data-step drift h(v) - v. With a
    denoiser it is the full composite D(h(v), sigma_t) - v, which makes a
    unit-dt Euler step identical to one stochastic solver step.
    """

    def b(t: float, v: np.ndarray) -> np.ndarray:
        x = prox_fidelity(obs, v, cfg.lam)
        if denoiser is None:
            return x - v
        step = int(np.floor(t + 1.0e-9))
        step = min(max(step, 0), cfg.schedule.steps - 1)
        return denoiser.denoise(x, sigma_at(cfg.schedule, step)) - v

    return b


def pnp_step(state: PnPState, obs: Observation, denoiser: Denoiser,
             cfg: PnPConfig,
             rng: Optional[RandomSource] = None) -> PnPState:
    """Advance the solver by one step."""
    if state.t >= cfg.max_iters:
        raise ValueError("state is already past max_iters.")
    sigma_t = sigma_at(cfg.schedule, state.t)
    u = state.u if cfg.variant == "admm" else np.zeros_like(state.v)
    x_new = prox_fidelity(obs, state.v - u, cfg.lam)
    v_new = denoiser.denoise(x_new + u, sigma_t)
    if cfg.mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode needs a random source.")
        inject = cfg.inject if cfg.inject is not None else cfg.schedule
        v_new = v_new - gaussian_field(rng, v_new.shape[0], v_new.shape[1],
                                       sigma_at(inject, state.t))
    if cfg.variant == "admm":
        u_new = u + (x_new - v_new)
    else:
        u_new = np.zeros_like(v_new)
    return PnPState(v=v_new, x=x_new, u=u_new, t=state.t + 1)


def run_pnp(v0: np.ndarray, obs: Observation, denoiser: Denoiser,
            cfg: PnPConfig,
            reference: Optional[np.ndarray] = None) -> Trajectory:
    """Run the solver from v0 and record the trajectory.

    Terminates with "diverged" if an iterate's sup-norm crosses the
    divergence threshold, with "converged-early" after `cfg.patience`
    consecutive step diffs below eps_stop relative to ||v0||, and with
    "completed" after max_iters steps otherwise. When `reference` is
    given, PSNR and SSIM against it are recorded for every iterate.
    """
    v0 = as_grid(v0)
    obs.op.validate_pair(v0, obs.y)
    if reference is not None:
        reference = as_grid(reference)
    rng = RandomSource(cfg.seed) if cfg.mode == "stochastic" else None
    state = initial_state(v0)
    iterates = [state.v.copy()]
    diffs: List[float] = []
    metrics: Optional[List[StepMetrics]] = None
    if reference is not None:
        metrics = [_measure(0, state.v, reference)]
    v0_norm = l2_norm(v0)
    stop_level = cfg.eps_stop * (v0_norm if v0_norm > 0 else 1.0)
    quiet_streak = 0
    terminated = "completed"
    for _ in range(cfg.max_iters):
        prev = state.v
        state = pnp_step(state, obs, denoiser, cfg, rng)
        diffs.append(l2_norm(state.v - prev))
        iterates.append(state.v)
        if metrics is not None:
            metrics.append(_measure(state.t, state.v, reference))
        if sup_norm(state.v) > DIVERGENCE_THRESHOLD:
            terminated = "diverged"
            break
        quiet_streak = quiet_streak + 1 if diffs[-1] < stop_level else 0
        if quiet_streak >= cfg.patience:
            terminated = "converged-early"
            break
    return Trajectory(iterates=iterates, step_diffs=diffs,
                      terminated=terminated, metrics=metrics)


def _measure(step: int, v: np.ndarray, reference: np.ndarray) -> StepMetrics:
    return StepMetrics(step=step, psnr=psnr(v, reference),
                       ssim=ssim(v, reference))


def run_pnp_ensemble(v0: np.ndarray, obs: Observation, denoiser: Denoiser,
                     cfg: PnPConfig, n_traj: int,
                     base_seed: Optional[int] = None, threads: int = 1,
                     reference: Optional[np.ndarray] = None) -> Ensemble:
    """Run `n_traj` independently seeded solver trajectories.

    Per-trajectory seeds are derive_seed(base_seed, i) with base_seed
    defaulting to cfg.seed, so the ensemble is reproducible and does not
    depend on the worker count.
    """
    if n_traj < 2:
        raise ValueError("an ensemble needs at least two trajectories.")
    base = cfg.seed if base_seed is None else base_seed
    seeds = [derive_seed(base, i) for i in range(n_traj)]

    def one(seed: int) -> Trajectory:
        return run_pnp(v0, obs, denoiser, cfg.with_seed(seed),
                       reference=reference)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(one, seeds))
    else:
        trajectories = [one(s) for s in seeds]
    return Ensemble(trajectories=trajectories, seeds=seeds)
