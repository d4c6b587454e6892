"""Restoration operators, each matched to the degradation family it inverts.

Restorers are deterministic, clamp to [0, 1], and return images at the
clean shape of their family.  Projections onto simple convex sets are
restorers too, with exact distances, so fixed-point identities can be
checked to numerical precision instead of eyeballed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .degradations import Degradation, DegradationSpec
from .image import Image
from .operators import Convolution, Decimation, Mask, default_kernel_size, gaussian_kernel

__all__ = [
    "Restorer",
    "PriorTerm",
    "WienerDeconv",
    "TvDenoise",
    "DctThreshold",
    "HarmonicInpaint",
    "SrUpsample",
    "BoxProjection",
    "L2BallProjection",
    "AffineProjection",
    "wiener_deconv",
    "tv_denoise",
    "dct_threshold",
    "harmonic_inpaint",
    "sr_upsample",
    "zero_fill_interp",
    "make_restorer",
    "default_pairs",
]


def _clamp(data: np.ndarray) -> Image:
    return Image(np.clip(data, 0.0, 1.0))


# ---------------------------------------------------------------------------
# functional cores


def wiener_deconv(y: Image, kernel: np.ndarray, snr: float) -> Image:
    """Frequency-domain deconvolution conj(K)Y / (|K|^2 + 1/snr), clamped."""
    if snr <= 0:
        raise ValueError(f"snr must be > 0, got {snr}")
    k = Convolution(kernel).transfer((y.height, y.width))
    denom = np.abs(k) ** 2 + 1.0 / snr
    out = np.empty_like(y.data)
    for ch in range(y.channels):
        spec = np.conj(k) * np.fft.fft2(y.data[:, :, ch])
        out[:, :, ch] = np.real(np.fft.ifft2(spec / denom))
    return _clamp(out)


def _grad(x: np.ndarray) -> np.ndarray:
    # forward differences, zero flux at the far edge
    g = np.zeros((2,) + x.shape)
    g[0, :-1, :] = x[1:, :] - x[:-1, :]
    g[1, :, :-1] = x[:, 1:] - x[:, :-1]
    return g


def _div(p: np.ndarray) -> np.ndarray:
    # negative adjoint of _grad
    d = np.zeros(p.shape[1:])
    d[0, :] += p[0, 0, :]
    d[1:-1, :] += p[0, 1:-1, :] - p[0, :-2, :]
    d[-1, :] -= p[0, -2, :]
    d[:, 0] += p[1, :, 0]
    d[:, 1:-1] += p[1, :, 1:-1] - p[1, :, :-2]
    d[:, -1] -= p[1, :, -2]
    return d


def tv_denoise(y: Image, strength: float, inner_iters: int = 50) -> Image:
    """Approximate prox of strength * isotropic TV via dual projections.

    Fixed dual step 1/8 (the stability bound for this scheme); returns
    the input untouched when strength is 0.
    """
    if strength < 0:
        raise ValueError(f"strength must be >= 0, got {strength}")
    if strength == 0:
        return _clamp(y.data)
    tau = 0.125
    out = np.empty_like(y.data)
    for ch in range(y.channels):
        chan = y.data[:, :, ch]
        p = np.zeros((2,) + chan.shape)
        for _ in range(inner_iters):
            g = _grad(_div(p) - chan / strength)
            weight = 1.0 + tau * np.sqrt((g**2).sum(axis=0))
            p = (p + tau * g) / weight
        out[:, :, ch] = chan - strength * _div(p)
    return _clamp(out)


def dct_threshold(y: Image, threshold: float) -> Image:
    """Soft-threshold every non-DC coefficient of the global orthonormal DCT."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    out = np.empty_like(y.data)
    for ch in range(y.channels):
        coef = scipy.fft.dctn(y.data[:, :, ch], type=2, norm="ortho")
        dc = coef[0, 0]
        coef = np.sign(coef) * np.maximum(np.abs(coef) - threshold, 0.0)
        coef[0, 0] = dc
        out[:, :, ch] = scipy.fft.idctn(coef, type=2, norm="ortho")
    return _clamp(out)


def harmonic_inpaint(y: Image, mask: np.ndarray, inner_iters: int = 2000) -> Image:
    """Fill unobserved pixels with the discrete Laplace equation.

    Observed pixels are copied through; missing ones are relaxed by
    checkerboard Gauss-Seidel sweeps (periodic 4-neighborhood) until the
    largest update falls below 1e-6 or the sweep cap is hit.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.shape != (y.height, y.width):
        raise ValueError(f"mask {mask.shape} vs image {y.shape}")
    if not mask.any():
        raise ValueError("cannot inpaint a fully-unobserved image")
    if mask.all():
        return _clamp(y.data)
    rows, cols = np.indices(mask.shape)
    colors = (rows + cols) % 2
    missing = ~mask
    out = np.empty_like(y.data)
    for ch in range(y.channels):
        x = y.data[:, :, ch].copy()
        x[missing] = x[mask].mean()
        for _ in range(inner_iters):
            delta = 0.0
            for color in (0, 1):
                nb = (
                    np.roll(x, 1, axis=0)
                    + np.roll(x, -1, axis=0)
                    + np.roll(x, 1, axis=1)
                    + np.roll(x, -1, axis=1)
                ) / 4.0
                upd = missing & (colors == color)
                if upd.any():
                    delta = max(delta, np.abs(nb[upd] - x[upd]).max())
                    x[upd] = nb[upd]
            if delta <= 1e-6:
                break
        out[:, :, ch] = x
    return _clamp(out)


def _interp_kernel(factor: int, anti_alias: np.ndarray | None) -> np.ndarray:
    if anti_alias is None:
        sigma = 0.5 * factor
        anti_alias = gaussian_kernel(sigma, default_kernel_size(sigma))
    return np.asarray(anti_alias, dtype=np.float64)


def zero_fill_interp(y: Image, factor: int, anti_alias: np.ndarray | None = None) -> Image:
    """Zero-fill upsample, then normalized Gaussian interpolation.

    Dividing by the smoothed sampling comb makes the interpolation exact
    on constant images, stride ripple included.
    """
    if factor < 2:
        raise ValueError(f"factor must be >= 2, got {factor}")
    kernel = _interp_kernel(factor, anti_alias)
    h, w = y.height * factor, y.width * factor
    comb = np.zeros((h, w))
    comb[::factor, ::factor] = 1.0
    k = Convolution(kernel).transfer((h, w))
    weight = np.real(np.fft.ifft2(k * np.fft.fft2(comb)))
    out = np.empty((h, w, y.channels))
    for ch in range(y.channels):
        filled = np.zeros((h, w))
        filled[::factor, ::factor] = y.data[:, :, ch]
        out[:, :, ch] = np.real(np.fft.ifft2(k * np.fft.fft2(filled))) / weight
    return _clamp(out)


def sr_upsample(y: Image, factor: int, anti_alias: np.ndarray | None = None, snr: float = 100.0) -> Image:
    """Interpolated upsample plus one Wiener sharpening pass.

    The sharpening filter undoes the decimation anti-alias blur and is
    normalized to unit DC gain, so flat regions keep their level.
    """
    kernel = _interp_kernel(factor, anti_alias)
    interp = zero_fill_interp(y, factor, kernel)
    k = Convolution(kernel).transfer((interp.height, interp.width))
    sharpen = np.conj(k) * (1.0 + 1.0 / snr) / (np.abs(k) ** 2 + 1.0 / snr)
    out = np.empty_like(interp.data)
    for ch in range(interp.channels):
        out[:, :, ch] = np.real(np.fft.ifft2(sharpen * np.fft.fft2(interp.data[:, :, ch])))
    return _clamp(out)


# ---------------------------------------------------------------------------
# restorer classes


class Restorer:
    """Base class: a deterministic map y -> clean-shape image in [0,1].

    `compatible_kinds` lists the forward-operator kinds the restorer
    knows how to undo; non-blind restorers read the sampled operator
    from the Degradation they are handed.
    """

    kind = "abstract"
    compatible_kinds: tuple = ()

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        raise NotImplementedError

    def accepts(self, spec: DegradationSpec) -> bool:
        return spec.operator_kind() in self.compatible_kinds


class WienerDeconv(Restorer):
    """Non-blind frequency-domain deblurrer.

    Reads the sampled kernel from the paired degradation; without one it
    falls back to the kernel it was built for.
    """

    kind = "wiener"
    compatible_kinds = ("convolution", "identity")

    def __init__(self, snr: float = 100.0, blur_sigma: float = 1.5, kernel: np.ndarray | None = None):
        if snr <= 0:
            raise ValueError(f"snr must be > 0, got {snr}")
        self.snr = float(snr)
        if kernel is None:
            kernel = gaussian_kernel(blur_sigma, default_kernel_size(blur_sigma))
        self.kernel = np.asarray(kernel, dtype=np.float64)

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        kernel = self.kernel
        if degradation is not None and isinstance(degradation.op, Convolution):
            kernel = degradation.op.kernel
        return wiener_deconv(y, kernel, self.snr)


class TvDenoise(Restorer):
    kind = "tv"
    compatible_kinds = ("identity", "convolution", "mask", "jpeg_surrogate")

    def __init__(self, strength: float = 0.1, inner_iters: int = 50):
        if strength < 0:
            raise ValueError(f"strength must be >= 0, got {strength}")
        self.strength = float(strength)
        self.inner_iters = int(inner_iters)

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        return tv_denoise(y, self.strength, self.inner_iters)


class DctThreshold(Restorer):
    kind = "dct"
    compatible_kinds = ("identity", "convolution", "mask", "jpeg_surrogate")

    def __init__(self, threshold: float = 0.02):
        if threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {threshold}")
        self.threshold = float(threshold)

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        return dct_threshold(y, self.threshold)


class HarmonicInpaint(Restorer):
    """Mask-conditioned hole filler; the mask rides in with the degradation."""

    kind = "inpaint"
    compatible_kinds = ("mask",)

    def __init__(self, inner_iters: int = 2000, mask: np.ndarray | None = None):
        self.inner_iters = int(inner_iters)
        self.mask = None if mask is None else np.asarray(mask).astype(bool)

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        mask = self.mask
        if degradation is not None and isinstance(degradation.op, Mask):
            mask = degradation.op.map
        if mask is None:
            raise ValueError("harmonic inpainting needs a mask, from either "
                             "the degradation or the constructor")
        return harmonic_inpaint(y, mask, self.inner_iters)


class SrUpsample(Restorer):
    kind = "sr"
    compatible_kinds = ("decimation",)

    def __init__(self, factor: int = 2, snr: float = 100.0):
        if factor < 2:
            raise ValueError(f"factor must be >= 2, got {factor}")
        self.factor = int(factor)
        self.snr = float(snr)

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        factor, anti_alias = self.factor, None
        if degradation is not None and isinstance(degradation.op, Decimation):
            factor = degradation.op.factor
            anti_alias = degradation.op.anti_alias_kernel
        return sr_upsample(y, factor, anti_alias, self.snr)


class ProjectionRestorer(Restorer):
    """Exact Euclidean projection onto a convex set, with exact distances."""

    kind = "projection"
    compatible_kinds = ("identity",)

    def project(self, x: Image) -> Image:
        raise NotImplementedError

    def squared_distance(self, x: Image) -> float:
        diff = x.data - self.project(x).data
        return float((diff**2).sum())

    def restore(self, y: Image, degradation: Degradation | None = None) -> Image:
        return _clamp(self.project(y).data)


class BoxProjection(ProjectionRestorer):
    def __init__(self, lo: float, hi: float):
        if lo > hi:
            raise ValueError(f"empty box [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)

    def project(self, x: Image) -> Image:
        return Image(np.clip(x.data, self.lo, self.hi))

    def squared_distance(self, x: Image) -> float:
        below = np.maximum(self.lo - x.data, 0.0)
        above = np.maximum(x.data - self.hi, 0.0)
        return float((below**2).sum() + (above**2).sum())


class L2BallProjection(ProjectionRestorer):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError(f"radius must be > 0, got {radius}")
        self.center = center if np.isscalar(center) else np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    def _offset(self, x: Image) -> np.ndarray:
        return x.data - self.center

    def project(self, x: Image) -> Image:
        off = self._offset(x)
        norm = float(np.sqrt((off**2).sum()))
        if norm <= self.radius:
            return x
        return Image(x.data - off * (1.0 - self.radius / norm))

    def squared_distance(self, x: Image) -> float:
        norm = float(np.sqrt((self._offset(x) ** 2).sum()))
        return max(0.0, norm - self.radius) ** 2


class AffineProjection(ProjectionRestorer):
    """Projection onto offset + span(basis); basis rows must be orthonormal."""

    def __init__(self, basis: np.ndarray, offset: np.ndarray):
        basis = np.asarray(basis, dtype=np.float64)
        self.offset = np.asarray(offset, dtype=np.float64)
        flat = basis.reshape(basis.shape[0], -1)
        gram = flat @ flat.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-8):
            raise ValueError("basis vectors must be orthonormal")
        self.basis = basis
        self._flat = flat

    def project(self, x: Image) -> Image:
        diff = (x.data - self.offset).ravel()
        coords = self._flat @ diff
        return Image(self.offset + (self._flat.T @ coords).reshape(self.offset.shape))


# ---------------------------------------------------------------------------
# prior terms and the registry


@dataclass(frozen=True)
class PriorTerm:
    """One weighted prior: a restorer, the degradations it expects, a weight."""

    restorer: Restorer
    spec: DegradationSpec
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not self.restorer.accepts(self.spec):
            raise ValueError(
                f"restorer '{self.restorer.kind}' does not handle "
                f"'{self.spec.family}' degradations ({self.spec.operator_kind()})"
            )


def make_restorer(token: str, **params) -> Restorer:
    """Build a restorer from a registry id.

    Plain ids: "wiener", "tv", "dct", "inpaint", "sr2" (or sr3, ...).
    Colon forms: "proj:box:<lo>:<hi>", "proj:ball:<center>:<radius>",
    "remote:<address>".  Keyword params override defaults.
    """
    if token.startswith("remote:"):
        from .remote import RemoteRestorer

        return RemoteRestorer.from_address(token[len("remote:"):], **params)
    if token.startswith("proj:"):
        parts = token.split(":")
        if len(parts) != 4:
            raise ValueError(f"malformed projection id: {token!r}")
        _, shape, a, b = parts
        if shape == "box":
            return BoxProjection(float(a), float(b))
        if shape == "ball":
            return L2BallProjection(float(a), float(b))
        raise ValueError(f"unknown projection set: {shape!r}")
    if token.startswith("sr") and token[2:].isdigit():
        return SrUpsample(factor=int(token[2:]), **params)
    table = {
        "wiener": WienerDeconv,
        "tv": TvDenoise,
        "dct": DctThreshold,
        "inpaint": HarmonicInpaint,
    }
    if token not in table:
        raise ValueError(f"unknown restorer id: {token!r}")
    return table[token](**params)


def default_pairs() -> tuple:
    """Bundled (restorer, degradation-class) pairings whose composition is
    numerically idempotent: one application lands on the composition's
    fixed-point set and further applications stay there.

    These are the pairings the stability guarantees are certified
    against.  Soft shrinkage restorers (tv, dct) contract a little on
    every application, so they ship as solver regularizers instead of
    certified pairs.
    """
    from .data import data_path
    from .fileio import load_kernel, load_mask

    lowpass = load_kernel(str(data_path("kernels/lowpass64.txt")))
    observed = load_mask(str(data_path("mask30.pgm")))
    spec0 = DegradationSpec.additive_noise((0.0, 0.0))
    return (
        PriorTerm(
            WienerDeconv(snr=1e5, blur_sigma=0.6),
            DegradationSpec.fixed(Convolution(lowpass), 0.0),
            0.2,
        ),
        PriorTerm(
            HarmonicInpaint(),
            DegradationSpec.mask(map=observed, sigma=(0.0, 0.0)),
            0.2,
        ),
        PriorTerm(BoxProjection(0.0, 1.0), spec0, 0.2),
        PriorTerm(L2BallProjection(0.5, 40.0), spec0, 0.2),
    )
