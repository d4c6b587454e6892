"""Image restoration by steering iterates toward restoration-operator fixed points.

The working pieces: linear forward operators and degradation sampling,
classical restorers with exact projection variants, data-fidelity
proximal steps, and a solver that mixes any number of weighted priors.
"""

from .datafit import ConvergenceError, DataFit, prox, prox_cg, prox_fft, prox_mask
from .degradations import Degradation, DegradationSpec, jpeg_surrogate, sample
from .diagnostics import (
    ProbeGrid,
    combined_fixed_point_trace,
    fixed_point_trace,
    prior_loss_probe,
    strength_ablation,
)
from .engine import (
    DivergenceError,
    SolveTrace,
    SolverConfig,
    StepSchedule,
    conditioned_prior,
    default_init,
    fire_hqs,
    pnp_hqs_step,
    prior_residual,
    pseudo_inverse,
    red_step,
    residual_function,
    sharp_gradient,
)
from .image import Image, Rng, l2_norm, psnr, ssim
from .operators import (
    Composition,
    Convolution,
    Decimation,
    Identity,
    LinearOp,
    Mask,
    default_kernel_size,
    gaussian_kernel,
)
from .restorers import (
    AffineProjection,
    BoxProjection,
    DctThreshold,
    HarmonicInpaint,
    L2BallProjection,
    PriorTerm,
    Restorer,
    SrUpsample,
    TvDenoise,
    WienerDeconv,
    default_pairs,
    make_restorer,
)

__version__ = "0.1.0"
