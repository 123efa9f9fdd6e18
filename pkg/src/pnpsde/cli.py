"""Command line entry points for restoration experiments.

Subcommands:

* run: one restoration run, or a seeded ensemble of stochastic runs;
* sweep-alpha: repeat a run across a grid of alpha ratios;
* certify: evaluate the convergence conditions on a test corpus and run
  the matching soundness experiment;
* init-template: write a commented starter config.

Runs are fully determined by the config file plus the seed: rerunning
with the same inputs produces byte-identical CSV files. Exit status is 0
for completed experiments, including runs that end with the classified
"diverged" status; 2 flags usage or config errors and 1 flags I/O
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import yaml

from .analysis import check_bounds, compare_laws, detect_cauchy
from .core import NoiseSchedule, PnPConfig, RandomSource, derive_seed
from .denoisers import (AmplifierDenoiser, Denoiser, GaussianSmoothDenoiser,
                        LinearMatrixDenoiser, MedianDenoiser, TVDenoiser,
                        clamp_wrap)
from .forward_models import (ConvolutionOp, DownsampleOp, IdentityOp, MaskOp,
                             Observation, degrade, random_mask)
from .io import (build_record, load_image, save_csv, save_pgm, save_record,
                 synth_phantom)
from .pnp_engine import run_pnp, run_pnp_ensemble

DEFAULT_ALPHAS = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0)

_NOISE_TAG = 0x6E6F697365
_CERT_TAGS = (0x656E7331, 0x656E7332)

TASKS = ("denoise", "inpaint", "deblur", "superres")
DENOISER_CHOICES = ("gaussian-smooth", "tv-chambolle", "median",
                    "linear-matrix", "amplifier")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---- config parsing --------------------------------------------------------


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: must be a mapping.")
    return value


def _get_float(sec: dict, path: str, key: str, default, positive=False,
               nonneg=False, optional=False):
    value = sec.get(key, default)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}.{key}: required value is missing.")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: must be a number.")
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(f"{path}.{key}: must be positive.")
    if nonneg and value < 0:
        raise ConfigError(f"{path}.{key}: must be nonnegative.")
    return value


def _get_int(sec: dict, path: str, key: str, default, minimum=None,
             optional=False):
    value = sec.get(key, default)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}.{key}: required value is missing.")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: must be an integer.")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be at least {minimum}.")
    return int(value)


def _get_str(sec: dict, path: str, key: str, default, choices=None,
             optional=False):
    value = sec.get(key, default)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}.{key}: required value is missing.")
    if not isinstance(value, str):
        raise ConfigError(f"{path}.{key}: must be a string.")
    if choices is not None and value not in choices:
        raise ConfigError(
            f"{path}.{key}: must be one of {', '.join(choices)}.")
    return value


@dataclasses.dataclass
class Setup:
    """Everything a run needs, built from one resolved config."""

    truth: np.ndarray
    obs: Observation
    denoiser: Denoiser
    cfg: PnPConfig
    v0: np.ndarray
    resolved: dict
    ensemble_size: int
    ensemble_base_seed: int
    out_dir: str
    dump_every: int


def _build_image(raw: dict) -> Tuple[np.ndarray, dict]:
    sec = _section(raw, "image")
    kind = _get_str(sec, "image", "kind", "phantom", ("phantom", "file"))
    resolved = {"kind": kind}
    if kind == "file":
        path = _get_str(sec, "image", "path", None)
        resolved["path"] = path
        return load_image(path), resolved
    phantom = _get_str(sec, "image", "phantom", "piecewise",
                       ("ramp", "checkerboard", "disk", "piecewise"))
    height = _get_int(sec, "image", "height", 64, minimum=2)
    width = _get_int(sec, "image", "width", 64, minimum=2)
    resolved.update({"phantom": phantom, "height": height, "width": width})
    return synth_phantom(phantom, height, width), resolved


def _build_kernel(sec: dict) -> Tuple[np.ndarray, dict]:
    kind = _get_str(sec, "operator", "kernel", "gaussian",
                    ("gaussian", "uniform"))
    size = _get_int(sec, "operator", "kernel_size", 5, minimum=1)
    if size % 2 == 0:
        raise ConfigError("operator.kernel_size: must be odd.")
    resolved = {"kernel": kind, "kernel_size": size}
    if kind == "uniform":
        return np.full((size, size), 1.0 / (size * size)), resolved
    sigma = _get_float(sec, "operator", "kernel_sigma", 1.0, positive=True)
    resolved["kernel_sigma"] = sigma
    half = size // 2
    axis = np.arange(-half, half + 1, dtype=np.float64)
    d2 = axis[:, None] ** 2 + axis[None, :] ** 2
    kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    return kernel / kernel.sum(), resolved


def _build_operator(raw: dict, shape) -> Tuple[object, dict]:
    task = _get_str(raw, "", "task", "inpaint", TASKS).strip()
    sec = _section(raw, "operator")
    resolved: dict = {}
    if task == "denoise":
        op = IdentityOp()
    elif task == "inpaint":
        fraction = _get_float(sec, "operator", "mask_fraction", 0.5,
                              positive=True)
        if fraction > 1:
            raise ConfigError("operator.mask_fraction: must be at most 1.")
        mask_seed = _get_int(sec, "operator", "mask_seed", 1234, minimum=0)
        resolved = {"mask_fraction": fraction, "mask_seed": mask_seed}
        op = MaskOp(random_mask(shape[0], shape[1], fraction, mask_seed))
    elif task == "deblur":
        kernel, resolved = _build_kernel(sec)
        op = ConvolutionOp(kernel)
    else:
        factor = _get_int(sec, "operator", "factor", 2, minimum=1)
        if shape[0] % factor or shape[1] % factor:
            raise ConfigError(
                "operator.factor: must divide the image dimensions.")
        resolved = {"factor": factor}
        op = DownsampleOp(factor)
    return op, {"task": task, "operator": resolved}


def _build_denoiser(raw: dict) -> Tuple[Denoiser, dict]:
    sec = _section(raw, "denoiser")
    kind = _get_str(sec, "denoiser", "kind", "tv-chambolle",
                    DENOISER_CHOICES)
    resolved: dict = {"kind": kind}
    if kind == "gaussian-smooth":
        width_scale = _get_float(sec, "denoiser", "width_scale", 0.5,
                                 positive=True)
        resolved["width_scale"] = width_scale
        denoiser: Denoiser = GaussianSmoothDenoiser(width_scale)
    elif kind == "tv-chambolle":
        iterations = _get_int(sec, "denoiser", "iterations", 50, minimum=1)
        weight_scale = _get_float(sec, "denoiser", "weight_scale", 1.0,
                                  positive=True)
        resolved.update({"iterations": iterations,
                         "weight_scale": weight_scale})
        denoiser = TVDenoiser(iterations=iterations,
                              weight_scale=weight_scale)
    elif kind == "median":
        thresholds = sec.get("thresholds", [0.05, 0.2])
        if (not isinstance(thresholds, (list, tuple))
                or len(thresholds) != 2):
            raise ConfigError("denoiser.thresholds: must be a pair.")
        resolved["thresholds"] = [float(thresholds[0]), float(thresholds[1])]
        denoiser = MedianDenoiser(thresholds)
    elif kind == "linear-matrix":
        gain = _get_float(sec, "denoiser", "gain", 1.0, positive=True)
        resolved["gain"] = gain
        denoiser = LinearMatrixDenoiser(gain=gain)
    else:
        gain = _get_float(sec, "denoiser", "gain", 1.5)
        if gain <= 1:
            raise ConfigError("denoiser.gain: amplifier gain must exceed 1.")
        resolved["gain"] = gain
        denoiser = AmplifierDenoiser(gain)
    clamp = sec.get("clamp")
    if clamp is not None:
        if not isinstance(clamp, (list, tuple)) or len(clamp) != 2:
            raise ConfigError("denoiser.clamp: must be [lo, hi].")
        lo, hi = float(clamp[0]), float(clamp[1])
        if not lo < hi:
            raise ConfigError("denoiser.clamp: needs lo < hi.")
        resolved["clamp"] = [lo, hi]
        denoiser = clamp_wrap(denoiser, lo, hi)
    else:
        resolved["clamp"] = None
    return denoiser, resolved


def _build_schedule(sec: dict, path: str, default_sigma0: float,
                    default_steps: int) -> Tuple[NoiseSchedule, dict]:
    kind = _get_str(sec, path, "kind", "exponential-decay",
                    ("constant", "linear-decay", "exponential-decay"))
    sigma0 = _get_float(sec, path, "sigma0", None, positive=True,
                        optional=True)
    if sigma0 is None:
        sigma0 = default_sigma0
    sigmaT = _get_float(sec, path, "sigmaT", 0.01, nonneg=True)
    steps = _get_int(sec, path, "steps", None, minimum=1, optional=True)
    if steps is None:
        steps = default_steps
    try:
        schedule = NoiseSchedule(kind=kind, sigma0=sigma0, sigmaT=sigmaT,
                                 steps=steps)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    resolved = {"kind": kind, "sigma0": sigma0, "sigmaT": sigmaT,
                "steps": steps}
    return schedule, resolved


def _build_solver(raw: dict) -> Tuple[PnPConfig, dict]:
    sec = _section(raw, "solver")
    gamma = _get_float(sec, "solver", "gamma", 1.0, positive=True)
    alpha = _get_float(sec, "solver", "alpha", None, positive=True,
                       optional=True)
    lam = _get_float(sec, "solver", "lam", None, positive=True,
                     optional=True)
    if alpha is not None and lam is not None:
        raise ConfigError("solver.alpha: mutually exclusive with solver.lam.")
    if alpha is not None:
        lam = float(np.sqrt(alpha))
    if lam is None:
        lam = 0.7
    mode = _get_str(sec, "solver", "mode", "deterministic",
                    ("deterministic", "stochastic"))
    variant = _get_str(sec, "solver", "variant", "simplified",
                       ("simplified", "admm"))
    max_iters = _get_int(sec, "solver", "max_iters", 100, minimum=1)
    seed = _get_int(sec, "solver", "seed", 42, minimum=0)
    eps_stop = _get_float(sec, "solver", "eps_stop", 1.0e-6, positive=True)
    patience = _get_int(sec, "solver", "patience", 5, minimum=1)
    base_sigma = float(np.sqrt(gamma) * lam)
    schedule, schedule_resolved = _build_schedule(
        _section(raw, "schedule"), "schedule", base_sigma, max_iters)
    inject_sec = raw.get("inject")
    inject = None
    inject_resolved = None
    if inject_sec is not None:
        if not isinstance(inject_sec, dict):
            raise ConfigError("inject: must be a mapping or null.")
        inject, inject_resolved = _build_schedule(
            inject_sec, "inject", base_sigma, max_iters)
    try:
        cfg = PnPConfig(gamma=gamma, lam=lam, schedule=schedule,
                        max_iters=max_iters, mode=mode, seed=seed,
                        variant=variant, inject=inject, eps_stop=eps_stop,
                        patience=patience)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None
    resolved = {
        "solver": {"gamma": gamma, "lam": lam, "alpha": None, "mode": mode,
                   "variant": variant, "max_iters": max_iters, "seed": seed,
                   "eps_stop": eps_stop, "patience": patience},
        "schedule": schedule_resolved,
        "inject": inject_resolved,
    }
    return cfg, resolved


def build_setup(raw: dict, seed_override: Optional[int] = None,
                ensemble_override: Optional[int] = None,
                out_override: Optional[str] = None,
                dump_override: Optional[int] = None) -> Setup:
    """Resolve a raw config mapping into runnable objects.

    The returned `resolved` dict has every default made explicit, so
    saving it and rerunning reproduces the experiment bit-exactly.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config root: must be a mapping.")
    if seed_override is not None:
        raw = dict(raw)
        solver = dict(_section(raw, "solver"))
        solver["seed"] = seed_override
        raw["solver"] = solver
    truth, image_resolved = _build_image(raw)
    op, task_resolved = _build_operator(raw, truth.shape)
    denoiser, denoiser_resolved = _build_denoiser(raw)
    cfg, solver_resolved = _build_solver(raw)

    noise_sigma = _get_float(raw, "", "noise_sigma", 0.05, nonneg=True)
    noise_rng = RandomSource(derive_seed(cfg.seed, _NOISE_TAG))
    obs = degrade(op, truth, noise_sigma,
                  noise_rng if noise_sigma > 0 else None)
    v0 = op.adjoint(obs.y)

    ens_sec = _section(raw, "ensemble")
    ensemble_size = _get_int(ens_sec, "ensemble", "size", 1, minimum=1)
    if ensemble_override is not None:
        ensemble_size = ensemble_override
    base_seed = _get_int(ens_sec, "ensemble", "base_seed", None, minimum=0,
                         optional=True)
    if base_seed is None:
        base_seed = cfg.seed

    out_sec = _section(raw, "output")
    out_dir = _get_str(out_sec, "output", "directory", "out")
    if out_override is not None:
        out_dir = out_override
    dump_every = _get_int(out_sec, "output", "dump_every", 0, minimum=0)
    if dump_override is not None:
        dump_every = dump_override

    resolved = {
        "task": task_resolved["task"],
        "image": image_resolved,
        "operator": task_resolved["operator"],
        "noise_sigma": noise_sigma,
        "denoiser": denoiser_resolved,
        "solver": solver_resolved["solver"],
        "schedule": solver_resolved["schedule"],
        "inject": solver_resolved["inject"],
        "ensemble": {"size": ensemble_size, "base_seed": base_seed},
        "output": {"directory": out_dir, "dump_every": dump_every},
    }
    return Setup(truth=truth, obs=obs, denoiser=denoiser, cfg=cfg, v0=v0,
                 resolved=resolved, ensemble_size=ensemble_size,
                 ensemble_base_seed=base_seed, out_dir=out_dir,
                 dump_every=dump_every)


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file: invalid YAML ({exc}).") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root: must be a mapping.")
    return raw


# ---- subcommands -------------------------------------------------------------


def cmd_run(setup: Setup, threads: int = 1) -> int:
    """Execute one run or one ensemble and write record files."""
    out = Path(setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    if setup.ensemble_size > 1:
        ensemble = run_pnp_ensemble(setup.v0, setup.obs, setup.denoiser,
                                    setup.cfg, setup.ensemble_size,
                                    base_seed=setup.ensemble_base_seed,
                                    threads=threads, reference=setup.truth)
        duration = time.monotonic() - start
        record = build_record(ensemble.trajectories[0], setup.cfg.schedule,
                              setup.resolved, duration_seconds=duration)
        save_csv(record, str(out / "run.csv"))
        _write_ensemble_csv(ensemble, str(out / "ensemble.csv"))
        terminal_psnrs = [t.metrics[-1].psnr for t in ensemble.trajectories
                          if t.metrics is not None]
        record.summary.update({
            "ensemble_size": setup.ensemble_size,
            "diverged": ensemble.n_diverged,
            "mean_terminal_psnr": float(np.mean(terminal_psnrs)),
        })
        save_record(record, str(out / "summary.json"))
        status = ("diverged" if ensemble.n_diverged else "completed")
        print(f"ensemble of {setup.ensemble_size}: {status}, "
              f"mean terminal psnr "
              f"{record.summary['mean_terminal_psnr']:.4f} dB")
    else:
        traj = run_pnp(setup.v0, setup.obs, setup.denoiser, setup.cfg,
                       reference=setup.truth)
        duration = time.monotonic() - start
        record = build_record(traj, setup.cfg.schedule, setup.resolved,
                              duration_seconds=duration)
        save_csv(record, str(out / "run.csv"))
        save_record(record, str(out / "summary.json"))
        if setup.dump_every > 0:
            for t in range(0, len(traj.iterates), setup.dump_every):
                save_pgm(traj.iterates[t], str(out / f"step_{t:04d}.pgm"))
        print(f"run: {traj.terminated} after {traj.steps} steps, "
              f"terminal psnr {record.summary['terminal_psnr']:.4f} dB")
    return 0


def _write_ensemble_csv(ensemble, path: str) -> None:
    lines = ["trajectory,seed,terminated,steps,terminal_psnr,terminal_ssim"]
    for i, traj in enumerate(ensemble.trajectories):
        if traj.metrics is not None:
            t_psnr = repr(traj.metrics[-1].psnr)
            t_ssim = repr(traj.metrics[-1].ssim)
        else:
            t_psnr = t_ssim = "nan"
        lines.append(f"{i},{ensemble.seeds[i]},{traj.terminated},"
                     f"{traj.steps},{t_psnr},{t_ssim}")
    with open(path, "wb") as handle:
        handle.write(("\n".join(lines) + "\n").encode("utf-8"))


def cmd_sweep_alpha(raw: dict, alphas: List[float], out_dir: str,
                    seed_override: Optional[int] = None) -> int:
    """Rerun the configured experiment across a grid of alpha ratios."""
    if not alphas:
        raise ConfigError("sweep: the alpha list must not be empty.")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["alpha,terminal_psnr,terminal_ssim,terminated"]
    print(f"{'alpha':>10}  {'psnr':>9}  {'ssim':>7}  terminated")
    for alpha in alphas:
        if alpha <= 0:
            raise ConfigError("sweep: alpha values must be positive.")
        variant = dict(raw)
        solver = dict(_section(variant, "solver"))
        solver["alpha"] = float(alpha)
        solver.pop("lam", None)
        variant["solver"] = solver
        setup = build_setup(variant, seed_override=seed_override,
                            out_override=out_dir)
        traj = run_pnp(setup.v0, setup.obs, setup.denoiser, setup.cfg,
                       reference=setup.truth)
        record = build_record(traj, setup.cfg.schedule, setup.resolved)
        t_psnr = record.summary["terminal_psnr"]
        t_ssim = record.summary["terminal_ssim"]
        lines.append(f"{repr(float(alpha))},{repr(t_psnr)},{repr(t_ssim)},"
                     f"{traj.terminated}")
        print(f"{alpha:>10.4g}  {t_psnr:>9.4f}  {t_ssim:>7.4f}  "
              f"{traj.terminated}")
    with open(out / "sweep.csv", "wb") as handle:
        handle.write(("\n".join(lines) + "\n").encode("utf-8"))
    return 0


def cmd_certify(raw: dict, setup: Setup, threads: int = 1) -> int:
    """Evaluate convergence conditions, then the matching soundness check."""
    out = Path(setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sec = _section(raw, "certify")
    corpus_h = _get_int(sec, "certify", "corpus_height", 32, minimum=8)
    corpus_w = _get_int(sec, "certify", "corpus_width", 32, minimum=8)
    n_pairs = _get_int(sec, "certify", "n_pairs", 32, minimum=1)
    cauchy_tol = _get_float(sec, "certify", "cauchy_tol", 1.0e-3,
                            positive=True)
    cauchy_window = _get_int(sec, "certify", "cauchy_window", 5, minimum=2)
    n_runs = _get_int(sec, "certify", "runs", 10, minimum=1)
    ens_size = _get_int(sec, "certify", "ensemble_size", 16, minimum=2)

    if setup.truth.shape != (corpus_h, corpus_w):
        raise ConfigError(
            "certify: image height/width must match corpus_height/width.")
    corpus = [synth_phantom(k, corpus_h, corpus_w)
              for k in ("ramp", "disk", "piecewise")]
    corpus.append(np.full((corpus_h, corpus_w), 0.25))
    corpus.append(np.full((corpus_h, corpus_w), 0.75))

    cert = check_bounds(setup.denoiser, setup.obs, setup.cfg, corpus,
                        n_pairs=n_pairs)
    print(f"regime: {cert.regime}")
    print(f"h_lipschitz: {cert.h_lipschitz:.6f}")
    print(f"d_lipschitz: {cert.d_lipschitz:.6f}")
    print(f"drift_bound: {cert.drift_bound:.6f}")
    bound = ("absent" if cert.denoiser_bound is None
             else f"{cert.denoiser_bound:.6f}")
    print(f"denoiser_bound: {bound}")
    print(f"residual_bound_c: {cert.residual_bound_c:.6f}")

    soundness: dict = {"checked": cert.regime}
    if cert.regime == "strong":
        det_cfg = dataclasses.replace(setup.cfg, mode="deterministic")
        starts_rng = RandomSource(derive_seed(setup.cfg.seed, _CERT_TAGS[0]))
        passed = 0
        for _ in range(n_runs):
            v0 = 0.5 + 0.25 * starts_rng.standard_normal(
                setup.truth.size).reshape(setup.truth.shape)
            traj = run_pnp(v0, setup.obs, setup.denoiser, det_cfg)
            if detect_cauchy(traj, cauchy_tol, cauchy_window):
                passed += 1
        soundness["cauchy_passed"] = passed
        soundness["cauchy_total"] = n_runs
        soundness["sound"] = passed == n_runs
        print(f"cauchy: {passed}/{n_runs} deterministic runs Cauchy "
              f"(tol {cauchy_tol:g}, window {cauchy_window})")
    elif cert.regime == "weak":
        sto_cfg = dataclasses.replace(setup.cfg, mode="stochastic")
        seeds = [derive_seed(setup.cfg.seed, tag) for tag in _CERT_TAGS]
        ensembles = [
            run_pnp_ensemble(setup.v0, setup.obs, setup.denoiser, sto_cfg,
                             ens_size, base_seed=s, threads=threads)
            for s in seeds]
        comparison = compare_laws(*ensembles)
        diverged = sum(e.n_diverged for e in ensembles)
        soundness.update({
            "mean_distance": comparison.mean_distance,
            "energy_distance": comparison.energy_distance,
            "variance_ratio": comparison.variance_ratio,
            "same_pass": comparison.same_pass,
            "diverged": diverged,
            "sound": comparison.same_pass and diverged == 0,
        })
        print(f"law comparison: mean_distance {comparison.mean_distance:.3e}"
              f" (tau {comparison.tau_mean:.3e}), energy_distance "
              f"{comparison.energy_distance:.3e} (tau "
              f"{comparison.tau_energy:.3e}), diverged {diverged}")
        print(f"same_pass: {comparison.same_pass}")
    else:
        soundness["sound"] = None
        print("no convergence conditions hold; nothing to certify.")

    payload = {"certificate": dataclasses.asdict(cert),
               "soundness": soundness, "config": setup.resolved}
    with open(out / "certify.json", "w", encoding="utf-8",
              newline="\n") as handle:
        import json
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return 0


TEMPLATE = """\
# Restoration experiment config. Every key shown here carries its
# default value; delete anything you do not need to override.

task: inpaint            # default: inpaint (denoise | inpaint | deblur | superres)

image:
  kind: phantom          # default: phantom (phantom | file)
  phantom: piecewise     # default: piecewise (ramp | checkerboard | disk | piecewise)
  height: 64             # default: 64
  width: 64              # default: 64
  # path: truth.pgm      # required when kind is file (PGM P5 or 8-bit gray PNG)

operator:
  mask_fraction: 0.5     # default: 0.5, observed pixel fraction (inpaint)
  mask_seed: 1234        # default: 1234, mask layout seed (inpaint)
  kernel: gaussian       # default: gaussian (gaussian | uniform), deblur only
  kernel_size: 5         # default: 5, odd kernel size (deblur)
  kernel_sigma: 1.0      # default: 1.0, gaussian kernel std in pixels (deblur)
  factor: 2              # default: 2, block size (superres)

noise_sigma: 0.05        # default: 0.05, measurement noise std

denoiser:
  kind: tv-chambolle     # default: tv-chambolle (gaussian-smooth | tv-chambolle | median | linear-matrix | amplifier)
  iterations: 50         # default: 50, dual steps (tv-chambolle)
  weight_scale: 1.0      # default: 1.0, weight = weight_scale * sigma^2 (tv-chambolle)
  width_scale: 0.5       # default: 0.5, blur std = width_scale * sigma * height (gaussian-smooth)
  thresholds: [0.05, 0.2] # default: [0.05, 0.2], radius thresholds (median)
  gain: 1.0              # default: 1.0 (linear-matrix), 1.5 (amplifier)
  clamp: null            # default: null, e.g. [0.0, 1.0] to clip outputs

solver:
  gamma: 1.0             # default: 1.0
  lam: 0.7               # default: 0.7; assumed noise std is sqrt(gamma) * lam
  alpha: null            # default: null; if set, lam = sqrt(alpha) (exclusive with lam)
  mode: deterministic    # default: deterministic (deterministic | stochastic)
  variant: simplified    # default: simplified (simplified | admm)
  max_iters: 100         # default: 100
  seed: 42               # default: 42
  eps_stop: 1.0e-6       # default: 1.0e-6, relative early-stop threshold
  patience: 5            # default: 5, consecutive quiet steps to stop

schedule:
  kind: exponential-decay # default: exponential-decay (constant | linear-decay | exponential-decay)
  sigma0: null           # default: null, meaning sqrt(gamma) * lam
  sigmaT: 0.01           # default: 0.01
  steps: null            # default: null, meaning max_iters

inject: null             # default: null, reuse `schedule` for injected noise;
                         # or a mapping with the same keys as `schedule`

ensemble:
  size: 1                # default: 1; >1 runs that many seeded trajectories
  base_seed: null        # default: null, meaning solver.seed

output:
  directory: out         # default: out
  dump_every: 0          # default: 0 (no PGM snapshots); N dumps every Nth iterate

certify:
  corpus_height: 32      # default: 32 (must match image height for certify)
  corpus_width: 32       # default: 32
  n_pairs: 32            # default: 32, sampled pairs per Lipschitz estimate
  cauchy_tol: 1.0e-3     # default: 1.0e-3
  cauchy_window: 5       # default: 5
  runs: 10               # default: 10, deterministic runs (strong regime)
  ensemble_size: 16      # default: 16, trajectories per ensemble (weak regime)
"""


def cmd_init_template(path: str) -> int:
    target = Path(path)
    if target.exists():
        raise ConfigError(f"init-template: {path} already exists.")
    target.write_text(TEMPLATE, encoding="utf-8")
    print(f"wrote {path}")
    return 0


# ---- argument parsing ---------------------------------------------------------


def _parse_alphas(text: str) -> List[float]:
    tokens = [tok.strip() for tok in text.split(",")]
    tokens = [tok for tok in tokens if tok]
    try:
        return [float(tok) for tok in tokens]
    except ValueError:
        raise ConfigError(f"--alphas: could not parse {text!r}.") from None


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnpsde",
        description="Plug-and-play restoration runs, sweeps, and "
                    "convergence certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override solver.seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for ensembles")

    p_run = sub.add_parser("run", help="execute one configured run")
    common(p_run)
    p_run.add_argument("--ensemble", type=int, default=None,
                       help="override ensemble.size")
    p_run.add_argument("--dump-every", type=int, default=None,
                       help="write a PGM snapshot every N steps")

    p_sweep = sub.add_parser("sweep-alpha",
                             help="rerun across a grid of alpha ratios")
    common(p_sweep)
    p_sweep.add_argument("--alphas",
                         default=",".join(str(a) for a in DEFAULT_ALPHAS),
                         help="comma-separated alpha values")

    p_cert = sub.add_parser("certify",
                            help="evaluate convergence conditions")
    common(p_cert)

    p_init = sub.add_parser("init-template",
                            help="write a commented starter config")
    p_init.add_argument("--out", default="config.yaml",
                        help="where to write the template")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "init-template":
            return cmd_init_template(args.out)
        raw = load_config(args.config)
        if args.command == "run":
            setup = build_setup(raw, seed_override=args.seed,
                                ensemble_override=args.ensemble,
                                out_override=args.out,
                                dump_override=args.dump_every)
            return cmd_run(setup, threads=max(1, args.threads))
        if args.command == "sweep-alpha":
            alphas = _parse_alphas(args.alphas)
            out_dir = args.out
            if out_dir is None:
                out_sec = _section(raw, "output")
                out_dir = _get_str(out_sec, "output", "directory", "out")
            return cmd_sweep_alpha(raw, alphas, out_dir,
                                   seed_override=args.seed)
        setup = build_setup(raw, seed_override=args.seed,
                            out_override=args.out)
        return cmd_certify(raw, setup, threads=max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
