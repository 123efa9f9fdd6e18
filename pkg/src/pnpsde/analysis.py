"""Convergence diagnostics for solver setups.

Two families of sufficient conditions are checked empirically:

* strong: the data step and the denoiser are both Lipschitz and the
  denoiser's constant is below 1, in which case deterministic iterate
  sequences contract and are Cauchy;
* weak: the data-step drift is bounded and the denoiser's outputs are
  bounded, in which case stochastic runs stay controlled and terminal
  distributions from disjoint seed sets agree in law.

All certificates carry "no violation observed" semantics: the Lipschitz
estimate is a sampled lower bound, and the bounds are maxima over the
supplied corpus, not proofs over all inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (PnPConfig, RandomSource, Trajectory, as_grid, derive_seed,
                   l2_norm, sigma_at, sup_norm)
from .denoisers import Denoiser
from .forward_models import Observation, prox_fidelity
from .sde_sim import Ensemble

REGIMES = ("strong", "weak", "none")

# Scales used to probe a denoiser for unbounded amplification. A map
# whose sup-norm gain stays at or below 1 out to the divergence scale is
# treated as non-escaping; anything that amplifies there is unbounded.
_ESCAPE_SCALES = (10.0, 100.0, 1000.0)
_ESCAPE_GAIN_TOL = 1.0e-3


# ---- Lipschitz estimation -------------------------------------------------


def estimate_lipschitz(map_fn: Callable[[np.ndarray], np.ndarray],
                       corpus: Sequence[np.ndarray], n_pairs: int,
                       rng: RandomSource,
                       perturbation: float = 1.0e-3) -> float:
    """Sampled lower bound on the Lipschitz constant of `map_fn`.

    Takes the max ratio ||f(x1) - f(x2)|| / ||x1 - x2|| over all corpus
    pairs plus `n_pairs` pairs of the form (x, x + delta) with a small
    random Gaussian perturbation delta. Coincident pairs are skipped;
    if no pair has a usable denominator a ValueError is raised.
    """
    corpus = [as_grid(x) for x in corpus]
    if len(corpus) < 1:
        raise ValueError("corpus must contain at least one image.")
    shape = corpus[0].shape
    for x in corpus:
        if x.shape != shape:
            raise ValueError("corpus images must share one shape.")
    if n_pairs < 0:
        raise ValueError("n_pairs must be nonnegative.")
    ratios: List[float] = []
    images = [map_fn(x) for x in corpus]
    for i in range(len(corpus)):
        for j in range(i + 1, len(corpus)):
            gap = l2_norm(corpus[i] - corpus[j])
            if gap < 1.0e-15:
                continue
            ratios.append(l2_norm(images[i] - images[j]) / gap)
    for k in range(n_pairs):
        base = corpus[k % len(corpus)]
        delta = perturbation * rng.standard_normal(
            base.size).reshape(shape)
        gap = l2_norm(delta)
        if gap < 1.0e-15:
            continue
        ratios.append(l2_norm(map_fn(base + delta) - map_fn(base)) / gap)
    if not ratios:
        raise ValueError("no usable pairs: corpus points all coincide.")
    return max(ratios)


def power_iteration_norm(matrix: np.ndarray, iters: int = 200,
                         seed: int = 0) -> float:
    """Spectral norm of a dense matrix by power iteration on M^T M."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D.")
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    v = gen.standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = matrix.T @ (matrix @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
    return float(np.linalg.norm(matrix @ v))


# ---- bound certificates ----------------------------------------------------


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Observed constants for one (denoiser, observation, config) setup.

    `denoiser_bound` is None when the escape probe found the denoiser
    amplifying large inputs, i.e. no output bound exists. `regime` is
    "strong" when the contraction conditions hold, "weak" when only the
    boundedness conditions hold, and "none" otherwise.
    """

    h_lipschitz: float
    d_lipschitz: float
    drift_bound: float
    denoiser_bound: Optional[float]
    residual_bound_c: float
    regime: str

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}.")


def _schedule_sigmas(cfg: PnPConfig, cap: int) -> List[float]:
    steps = cfg.schedule.steps
    if steps <= cap:
        idx = range(steps)
    else:
        idx = np.unique(np.linspace(0, steps - 1, cap).round().astype(int))
    values = sorted({sigma_at(cfg.schedule, int(i)) for i in idx})
    return values


def _escapes(denoiser: Denoiser, corpus: Sequence[np.ndarray],
             sigmas: Sequence[float]) -> bool:
    probe_sigmas = (sigmas[0], sigmas[-1]) if len(sigmas) > 1 else sigmas
    for x in corpus:
        base = sup_norm(x)
        if base == 0:
            continue
        for scale in _ESCAPE_SCALES:
            probe = x * (scale / base)
            for sigma in probe_sigmas:
                gain = sup_norm(denoiser.denoise(probe, sigma)) / scale
                if gain > 1.0 + _ESCAPE_GAIN_TOL:
                    return True
    return False


def check_bounds(denoiser: Denoiser, obs: Observation, cfg: PnPConfig,
                 corpus: Sequence[np.ndarray],
                 n_pairs: int = 32) -> ConvergenceCertificate:
    """Evaluate the convergence conditions on a test corpus.

    Lipschitz constants are sampled lower bounds; the drift and output
    bounds are maxima over the corpus and the schedule's sigma values.
    The denoiser bound is reported absent if scaling corpus images up to
    the divergence scale reveals sup-norm amplification.
    """
    corpus = [as_grid(x) for x in corpus]
    if len(corpus) < 2:
        raise ValueError("check_bounds needs at least two corpus images.")
    rng = RandomSource(derive_seed(cfg.seed, 0x636572746966))
    sigmas = _schedule_sigmas(cfg, cap=32)
    lip_sigmas = _schedule_sigmas(cfg, cap=8)

    h_lip = estimate_lipschitz(
        lambda v: prox_fidelity(obs, v, cfg.lam), corpus, n_pairs, rng)
    d_lip = max(
        estimate_lipschitz(
            lambda x, s=s: denoiser.denoise(x, s), corpus, n_pairs, rng)
        for s in lip_sigmas)

    drift_bound = max(
        sup_norm(prox_fidelity(obs, v, cfg.lam) - v) for v in corpus)

    output_bound = 0.0
    residual_c = 0.0
    for x in corpus:
        for sigma in sigmas:
            out = denoiser.denoise(x, sigma)
            output_bound = max(output_bound, sup_norm(out))
            if sigma > 0:
                residual_c = max(residual_c, sup_norm(out - x) / sigma)

    denoiser_bound: Optional[float] = output_bound
    if _escapes(denoiser, corpus, sigmas):
        denoiser_bound = None

    weak_ok = denoiser_bound is not None and np.isfinite(drift_bound)
    strong_ok = d_lip < 1.0 and np.isfinite(h_lip) and weak_ok
    regime = "strong" if strong_ok else ("weak" if weak_ok else "none")
    return ConvergenceCertificate(
        h_lipschitz=h_lip, d_lipschitz=d_lip, drift_bound=drift_bound,
        denoiser_bound=denoiser_bound, residual_bound_c=residual_c,
        regime=regime)


# ---- Cauchy detection ------------------------------------------------------


def detect_cauchy(traj: Trajectory, tol: float, window: int) -> bool:
    """True iff the trailing step diffs are small and non-increasing.

    Checks the last `window` step diffs: all must be below `tol` and the
    sequence must not increase by more than 10 percent step to step.
    Raises ValueError when the trajectory is shorter than the window.
    """
    if tol <= 0:
        raise ValueError("tol must be positive.")
    if window < 2:
        raise ValueError("window must be at least 2.")
    if len(traj.step_diffs) < window:
        raise ValueError(
            f"trajectory has {len(traj.step_diffs)} step diffs, "
            f"need at least {window}.")
    if traj.terminated == "diverged":
        return False
    tail = traj.step_diffs[-window:]
    if max(tail) >= tol:
        return False
    for a, b in zip(tail, tail[1:]):
        if b > 1.1 * a:
            return False
    return True


# ---- law comparison --------------------------------------------------------


@dataclass(frozen=True)
class LawComparison:
    """Distances between the terminal distributions of two ensembles."""

    mean_distance: float
    variance_ratio: float
    energy_distance: float
    same_pass: bool
    tau_mean: float
    tau_energy: float


def _pairwise_abs_sum(a_sorted: np.ndarray, b_sorted: np.ndarray) -> float:
    prefix = np.concatenate(([0.0], np.cumsum(b_sorted)))
    total = prefix[-1]
    m = b_sorted.size
    k = np.searchsorted(b_sorted, a_sorted, side="left")
    below = a_sorted * k - prefix[k]
    above = (total - prefix[k]) - a_sorted * (m - k)
    return float(np.sum(below + above))


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Energy distance between two 1-D samples (V-statistic form).

    2 E|a - b| - E|a - a'| - E|b - b'| with expectations over all ordered
    pairs, so identical samples give exactly zero.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("energy distance needs non-empty samples.")
    cross = _pairwise_abs_sum(a, b) / (a.size * b.size)
    within_a = _pairwise_abs_sum(a, a) / (a.size * a.size)
    within_b = _pairwise_abs_sum(b, b) / (b.size * b.size)
    return 2.0 * cross - within_a - within_b


def _split_null_energies(terminal: np.ndarray, splits: int,
                         gen: np.random.Generator) -> List[float]:
    n = terminal.shape[0]
    values = []
    for _ in range(splits):
        order = gen.permutation(n)
        half = n // 2
        left = terminal[order[:half]].ravel()
        right = terminal[order[half:]].ravel()
        values.append(energy_distance(left, right))
    return values


def compare_laws(e1: Ensemble, e2: Ensemble,
                 tau_mean: Optional[float] = None,
                 tau_energy: Optional[float] = None) -> LawComparison:
    """Compare terminal distributions of two ensembles.

    mean_distance is the per-pixel RMS gap between ensemble means,
    variance_ratio the ratio of mean per-pixel variances (first over
    second), and energy_distance is computed on the pooled terminal
    pixels. Thresholds default to three times the within-ensemble
    Monte-Carlo spread: tau_mean from the standard error of the means,
    tau_energy from energy distances between random half-splits of each
    ensemble. The comparison passes when both distances are below their
    thresholds; the variance ratio is reported but not gated.
    """
    t1 = e1.terminal_states()
    t2 = e2.terminal_states()
    if t1.shape[1:] != t2.shape[1:]:
        raise ValueError("ensembles must share the grid shape.")
    mean_gap = t1.mean(axis=0) - t2.mean(axis=0)
    mean_distance = float(np.sqrt(np.mean(mean_gap ** 2)))
    var1 = float(t1.var(axis=0, ddof=1).mean())
    var2 = float(t2.var(axis=0, ddof=1).mean())
    if var2 > 0:
        variance_ratio = var1 / var2
    else:
        variance_ratio = 1.0 if var1 == 0 else float("inf")
    ed = energy_distance(t1.ravel(), t2.ravel())
    if tau_mean is None:
        se = np.sqrt(var1 / t1.shape[0] + var2 / t2.shape[0])
        tau_mean = max(3.0 * float(se), 1.0e-12)
    if tau_energy is None:
        gen = np.random.Generator(np.random.Philox(key=0xC0FFEE))
        nulls = (_split_null_energies(t1, 8, gen)
                 + _split_null_energies(t2, 8, gen))
        tau_energy = max(3.0 * float(np.mean(nulls)), 1.0e-12)
    same = mean_distance < tau_mean and ed < tau_energy
    return LawComparison(mean_distance=mean_distance,
                         variance_ratio=variance_ratio,
                         energy_distance=ed, same_pass=same,
                         tau_mean=float(tau_mean),
                         tau_energy=float(tau_energy))
