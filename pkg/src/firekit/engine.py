"""Fixed-point restoration solver with weighted prior residuals.

Each iteration draws a degradation per prior, measures how far the
iterate is from that prior's fixed points through the residual
x - R(Hx + w), steps against the weighted sum of residuals, and applies
the data-fidelity prox.  Baseline single-prior steps and the residual
function used by the convergence diagnostics live here too.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datafit import DataFit, prox
from .degradations import Degradation, sample as sample_degradation
from .image import Image, Rng, l2_norm, psnr
from .operators import Convolution, Decimation, LinearOp, Mask
from .restorers import PriorTerm, Restorer, wiener_deconv, zero_fill_interp

__all__ = [
    "StepSchedule",
    "SolverConfig",
    "SolveTrace",
    "DivergenceError",
    "prior_residual",
    "fire_hqs",
    "red_step",
    "pnp_hqs_step",
    "sharp_gradient",
    "residual_function",
    "conditioned_prior",
    "default_init",
    "pseudo_inverse",
]


class DivergenceError(RuntimeError):
    """Solver produced a non-finite iterate; carries the trace so far."""

    def __init__(self, iteration: int, trace: "SolveTrace"):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace


@dataclass(frozen=True)
class StepSchedule:
    """Per-iteration multiplier applied to every prior weight."""

    kind: str
    scale: float = 1.0
    exponent: float = 0.75

    @staticmethod
    def constant(scale: float = 1.0) -> "StepSchedule":
        return StepSchedule("constant", scale)

    @staticmethod
    def polynomial(scale: float = 1.0, exponent: float = 0.75) -> "StepSchedule":
        # exponent in (0.5, 1]: steps must decay, but not be summable
        if not 0.5 < exponent <= 1.0:
            raise ValueError(f"polynomial exponent must be in (0.5, 1], got {exponent}")
        return StepSchedule("polynomial", scale, exponent)

    def factor(self, k: int) -> float:
        if self.kind == "constant":
            return self.scale
        if self.kind == "polynomial":
            return self.scale / (k + 1) ** self.exponent
        raise ValueError(f"unknown schedule kind: {self.kind!r}")


@dataclass(frozen=True)
class SolverConfig:
    priors: tuple
    lam: float = 0.0
    iters: int = 30
    mode: str = "stochastic"
    schedule: StepSchedule = field(default_factory=StepSchedule.constant)
    return_u: bool | None = None
    parallel_priors: bool = False
    threads: int = 4
    seed: int = 0
    stop_increment: float | None = None
    record_iterates: bool = False
    track_f: int = 0
    prox_route: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.iters < 0:
            raise ValueError(f"iters must be >= 0, got {self.iters}")
        if self.mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        total = sum(term.gamma for term in self.priors)
        if total > 1.0 + 1e-12:
            raise ValueError(f"prior weights sum to {total}, must be <= 1")
        if abs(total - 1.0) <= 1e-12 and self.priors:
            warnings.warn(
                "prior weights sum to 1; convergence guarantees need a sum < 1",
                RuntimeWarning,
                stacklevel=3,
            )

    def resolve_return_u(self) -> bool:
        if self.return_u is not None:
            return self.return_u
        return len(self.priors) > 1


@dataclass
class SolveTrace:
    """Per-iteration record of a solve; one row per completed iteration."""

    residual_norms: list = field(default_factory=list)   # list of per-prior norms
    objective: list = field(default_factory=list)
    f_norm: list = field(default_factory=list)           # None when not tracked
    psnr: list = field(default_factory=list)             # None without a reference
    ms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)         # filled when recording

    def __len__(self) -> int:
        return len(self.objective)

    def to_csv(self, include_ms: bool = True) -> str:
        n = len(self.residual_norms[0]) if self.residual_norms else 0
        cols = ["iter"] + [f"prior_{i + 1}_residual" for i in range(n)]
        cols += ["objective", "F_norm", "psnr"] + (["ms"] if include_ms else [])
        lines = [",".join(cols)]
        for k in range(len(self)):
            row = [str(k)] + [_fmt(v) for v in self.residual_norms[k]]
            row += [_fmt(self.objective[k]), _fmt(self.f_norm[k]), _fmt(self.psnr[k])]
            if include_ms:
                row.append(_fmt(self.ms[k]))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def prior_residual(x: Image, term: PriorTerm, rng: Rng) -> Image:
    """Draw (H, w) from the term's spec and return x - R(Hx + w)."""
    deg = sample_degradation(term.spec, rng)
    y = deg.apply(x, rng)
    return x - term.restorer.restore(y, deg)


def _frozen_residual(x: Image, term: PriorTerm, deg: Degradation, w) -> Image:
    y = deg.op.forward(x)
    if w is not None:
        y = Image(y.data + w)
    return x - term.restorer.restore(y, deg)


def sharp_gradient(x: Image, term: PriorTerm, rng: Rng) -> Image:
    """Prior residual pushed through H^T H with the same sampled pair.

    Vanishes identically on the null space of H, which is exactly why it
    fails on inpainting: masked pixels never receive a correction.
    """
    deg = sample_degradation(term.spec, rng)
    if not getattr(deg.op, "is_linear", True):
        raise ValueError(f"operator kind '{deg.op.kind}' is non-linear; no adjoint")
    y = deg.apply(x, rng)
    r = x - term.restorer.restore(y, deg)
    return deg.op.adjoint(deg.op.forward(r))


def residual_function(
    x: Image, df: DataFit, priors, samples: int, rng: Rng, prox_route: str = "auto"
) -> float:
    """Fixed-point mismatch ||x - prox(x - mean residual)||, sampled.

    The half-gradient of the mean squared set distance is estimated by
    averaging prior residuals over fresh draws; weights do not enter.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    priors = list(priors)
    if not priors:
        return l2_norm(x - prox(df, x, route=prox_route))
    total = Image.zeros(x.height, x.width, x.channels)
    for s in range(samples):
        for n, term in enumerate(priors):
            total = total + prior_residual(x, term, rng.split(f"F/s={s}/n={n}"))
    estimate = total / float(samples * len(priors))
    return l2_norm(x - prox(df, x - estimate, route=prox_route))


def conditioned_prior(A: LinearOp, restorer: Restorer, gamma: float) -> PriorTerm:
    """Pin one prior to the actual measurement operator (no extra noise)."""
    from .degradations import DegradationSpec

    return PriorTerm(restorer, DegradationSpec.fixed(A, 0.0), gamma)


def default_init(y: Image, A: LinearOp) -> Image:
    """Cheap regularized start: good enough to keep early iterations sane."""
    if isinstance(A, Mask):
        return A.adjoint(y)
    if isinstance(A, Convolution):
        return wiener_deconv(y, A.kernel, snr=100.0)
    if isinstance(A, Decimation):
        return zero_fill_interp(y, A.factor, A.anti_alias_kernel)
    return A.adjoint(y)


def pseudo_inverse(y: Image, A: LinearOp) -> Image:
    """Prior-free baseline: invert A with near-zero regularization.

    Deliberately weaker than default_init for blur, where it amplifies
    measurement noise at every frequency the kernel suppresses.
    """
    if isinstance(A, Convolution):
        return wiener_deconv(y, A.kernel, snr=1e4)
    return default_init(y, A)


def fire_hqs(
    y: Image,
    A: LinearOp,
    cfg: SolverConfig,
    x0: Image | None = None,
    reference: Image | None = None,
) -> tuple[Image, SolveTrace]:
    """Run the full solver; returns the final image and its trace.

    Per iteration: evaluate every prior residual on the current iterate,
    subtract their weighted sum, then apply the data-fidelity prox.  The
    pre-prox point u is returned instead of the prox output when
    return_u resolves to true.
    """
    x = default_init(y, A) if x0 is None else x0
    df = DataFit(A, y, cfg.lam)
    rng = Rng(cfg.seed)
    trace = SolveTrace()
    if cfg.record_iterates:
        trace.iterates.append(x)

    frozen = None
    if cfg.mode == "deterministic":
        frozen = []
        for n, term in enumerate(cfg.priors):
            r = rng.split(f"det/n={n}")
            deg = sample_degradation(term.spec, r)
            w = None
            if deg.noise_sigma > 0:
                w = r.normal(deg.op.output_shape(x.shape), deg.noise_sigma)
            frozen.append((deg, w))

    def residual_at(k: int, n: int, xk: Image) -> Image:
        if frozen is not None:
            deg, w = frozen[n]
            return _frozen_residual(xk, cfg.priors[n], deg, w)
        return prior_residual(xk, cfg.priors[n], rng.split(f"noise/k={k}/n={n}"))

    pool = None
    if cfg.parallel_priors and len(cfg.priors) > 1:
        pool = ThreadPoolExecutor(max_workers=cfg.threads)
    try:
        u = x
        for k in range(cfg.iters):
            started = time.perf_counter()
            if pool is not None:
                residuals = list(pool.map(lambda n: residual_at(k, n, x), range(len(cfg.priors))))
            else:
                residuals = [residual_at(k, n, x) for n in range(len(cfg.priors))]
            step = cfg.schedule.factor(k)
            u = x
            for term, r in zip(cfg.priors, residuals):
                u = u - (step * term.gamma) * r
            x_next = prox(df, u, route=cfg.prox_route) if cfg.lam > 0 else u
            if not np.isfinite(x_next.data).all():
                raise DivergenceError(k, trace)

            trace.residual_norms.append([l2_norm(r) for r in residuals])
            obj = cfg.lam * df.value(x) + 0.5 * sum(
                term.gamma * l2_norm(r) ** 2 for term, r in zip(cfg.priors, residuals)
            )
            trace.objective.append(obj)
            f_val = None
            if cfg.track_f > 0:
                f_val = residual_function(
                    x, df, cfg.priors, cfg.track_f, rng.split(f"track_f/k={k}"), cfg.prox_route
                )
            trace.f_norm.append(f_val)
            trace.psnr.append(None if reference is None else psnr(x_next, reference))
            trace.ms.append((time.perf_counter() - started) * 1000.0)
            if cfg.record_iterates:
                trace.iterates.append(x_next)

            increment = l2_norm(x_next - x)
            x = x_next
            if cfg.stop_increment is not None and increment <= cfg.stop_increment:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return (u if cfg.resolve_return_u() else x), trace


def red_step(
    x: Image,
    df: DataFit,
    R: Restorer,
    gamma: float,
    use_residual: bool = False,
    degradation: Degradation | None = None,
) -> Image:
    """One step of prox(x - gamma * R(x)).

    The restorer output itself sits inside the prox argument by default;
    use_residual swaps in x - R(x), the form most regularization-by-
    denoising literature intends.  Restorers that need side information
    (a mask, a kernel) can be handed a degradation to read it from.
    """
    r_out = R.restore(x, degradation)
    inner = x - gamma * (x - r_out) if use_residual else x - gamma * r_out
    return prox(df, inner)


def pnp_hqs_step(
    x: Image, df: DataFit, R: Restorer, degradation: Degradation | None = None
) -> Image:
    """One step of R(prox(x)): prox first, restorer second."""
    return R.restore(prox(df, x), degradation)
