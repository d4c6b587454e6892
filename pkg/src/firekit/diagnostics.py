"""Empirical probes of restorer fixed-point behavior.

Three questions, three tools: does iterating a restorer alone destroy an
image (trace), how far is a degraded image from a restorer's fixed
points (probe grid), and how does reconstruction quality move with the
prior's degradation strength (ablation)?
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .degradations import DegradationSpec, sample as sample_degradation
from .engine import SolverConfig, fire_hqs
from .image import Image, Rng, l2_norm, psnr, ssim
from .operators import Convolution, LinearOp, default_kernel_size, gaussian_kernel
from .restorers import PriorTerm

__all__ = [
    "ProbeGrid",
    "fixed_point_trace",
    "combined_fixed_point_trace",
    "prior_loss_probe",
    "strength_ablation",
]


@dataclass(frozen=True)
class ProbeGrid:
    """Blur/noise strength axes plus a per-cell sample count."""

    sigma_blur: tuple
    sigma_noise: tuple
    samples: int = 8

    def __post_init__(self):
        object.__setattr__(self, "sigma_blur", tuple(float(v) for v in self.sigma_blur))
        object.__setattr__(self, "sigma_noise", tuple(float(v) for v in self.sigma_noise))
        if not self.sigma_blur or not self.sigma_noise:
            raise ValueError("probe grid axes must be non-empty")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")


def fixed_point_trace(
    x0: Image, term: PriorTerm, K: int, compose_degradation: bool, rng: Rng
) -> list:
    """Iterate the restorer K times, logging PSNR against the start.

    With compose_degradation the input is pushed through a fresh sampled
    degradation before each restore (the operating regime the restorer
    expects); without it the restorer eats its own output raw.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    x = x0
    series = [psnr(x, x0)]
    for k in range(K):
        if compose_degradation:
            r = rng.split(f"k={k}/n=0")
            deg = sample_degradation(term.spec, r)
            x = term.restorer.restore(deg.apply(x, r), deg)
        else:
            x = term.restorer.restore(x)
        series.append(psnr(x, x0))
    return series


def combined_fixed_point_trace(x0: Image, terms, weights, K: int, rng: Rng) -> list:
    """Iterate x <- x - sum w_n (x - T_n(x)) with no data term, log PSNR."""
    terms = list(terms)
    weights = [float(w) for w in weights]
    if len(terms) != len(weights):
        raise ValueError("one weight per term required")
    if sum(weights) > 1.0 + 1e-12:
        raise ValueError(f"weights sum to {sum(weights)}, must be <= 1")
    x = x0
    series = [psnr(x, x0)]
    for k in range(K):
        step = Image.zeros(x.height, x.width, x.channels)
        for n, (term, w) in enumerate(zip(terms, weights)):
            r = rng.split(f"k={k}/n={n}")
            deg = sample_degradation(term.spec, r)
            restored = term.restorer.restore(deg.apply(x, r), deg)
            step = step + w * (x - restored)
        x = x - step
        series.append(psnr(x, x0))
    return series


def prior_loss_probe(x: Image, term: PriorTerm, grid: ProbeGrid, rng: Rng) -> np.ndarray:
    """Mean restoration distance over a blur/noise grid.

    Cell (i, j) degrades x with blur grid.sigma_blur[i] and noise
    grid.sigma_noise[j], then averages ||y - R(Hy + w)|| over the cell's
    samples, with (H, w) drawn from the term's own spec.
    """
    out = np.zeros((len(grid.sigma_blur), len(grid.sigma_noise)))
    for i, sb in enumerate(grid.sigma_blur):
        blur = None
        if sb > 0:
            blur = Convolution(gaussian_kernel(sb, default_kernel_size(sb)))
        for j, sn in enumerate(grid.sigma_noise):
            cell = rng.split(f"cell/b={i}/n={j}")
            total = 0.0
            for s in range(grid.samples):
                r = cell.split(f"s={s}")
                y = blur.forward(x) if blur is not None else x
                if sn > 0:
                    y = Image(y.data + r.normal(y.shape, sn))
                deg = sample_degradation(term.spec, r)
                restored = term.restorer.restore(deg.apply(y, r), deg)
                total += l2_norm(y - restored)
            out[i, j] = total / grid.samples
    return out


def _respec(spec: DegradationSpec, param: str, value: float) -> DegradationSpec:
    params = dict(spec.params)
    if param not in params:
        raise ValueError(f"spec family '{spec.family}' has no parameter '{param}'")
    if spec.family == "fixed":
        params[param] = float(value)
    else:
        params[param] = (float(value), float(value))
    return DegradationSpec(spec.family, params)


def strength_ablation(
    y: Image,
    A: LinearOp,
    cfg: SolverConfig,
    axis,
    reference: Image,
    param: str = "sigma",
    prior_index: int = 0,
) -> list:
    """Sweep one prior's degradation strength; returns (PSNR, SSIM) per value."""
    axis = [float(v) for v in axis]
    if not axis:
        raise ValueError("strength axis must be non-empty")
    if not cfg.priors:
        raise ValueError("config has no priors to ablate")
    curve = []
    for value in axis:
        priors = list(cfg.priors)
        old = priors[prior_index]
        priors[prior_index] = PriorTerm(old.restorer, _respec(old.spec, param, value), old.gamma)
        swept = dataclasses.replace(cfg, priors=tuple(priors))
        final, _ = fire_hqs(y, A, swept, reference=reference)
        curve.append((psnr(final, reference), ssim(final, reference)))
    return curve
