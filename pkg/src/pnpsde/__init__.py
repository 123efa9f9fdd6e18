"""Plug-and-play image restoration with a diffusion-process view.

The package pairs a proximal data-fidelity step with pluggable denoisers,
simulates the equivalent stochastic differential equation, and certifies
convergence regimes empirically.
"""

from .core import (DIVERGENCE_THRESHOLD, NoiseSchedule, PnPConfig,
                   RandomSource, StepMetrics, Trajectory, as_grid,
                   derive_seed, gaussian_field, l2_norm, sigma_at, sup_norm)
from .forward_models import (ConvolutionOp, DownsampleOp, IdentityOp, MaskOp,
                             MeasurementOp, Observation, degrade,
                             prox_fidelity, random_mask)
from .denoisers import (AmplifierDenoiser, ClampedDenoiser, Denoiser,
                        GaussianSmoothDenoiser, LinearMatrixDenoiser,
                        MedianDenoiser, ResidualReport, TVDenoiser,
                        check_residual_gaussianity, clamp_wrap,
                        identity_denoiser)
from .pnp_engine import (PnPState, drift, initial_state, make_sde_drift,
                         pnp_step, run_pnp, run_pnp_ensemble)
from .sde_sim import (Ensemble, SDEProblem, constant_diffusion, em_step,
                      schedule_diffusion, simulate, simulate_ensemble)
from .analysis import (ConvergenceCertificate, LawComparison, check_bounds,
                       compare_laws, detect_cauchy, energy_distance,
                       estimate_lipschitz, power_iteration_norm)
from .metrics import psnr, ssim
from .io import (ExperimentRecord, ImageFormatError, StepRow, build_record,
                 load_csv_rows, load_image, load_record, save_csv, save_pgm,
                 save_record, synth_phantom)

__version__ = "0.1.0"
