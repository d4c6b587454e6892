"""Degradation classes: sampled operator/noise pairs and the JPEG surrogate.

A DegradationSpec describes a distribution over (operator, noise sigma)
pairs; sample() draws a concrete Degradation from it.  Noise is always
i.i.d. Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .image import Image, Rng
from .operators import (
    Convolution,
    Decimation,
    Identity,
    LinearOp,
    Mask,
    default_kernel_size,
    gaussian_kernel,
)

__all__ = [
    "DegradationSpec",
    "Degradation",
    "JpegSurrogate",
    "jpeg_surrogate",
    "sample",
]

FAMILIES = ("additive_noise", "blur", "decimation", "mask", "jpeg_surrogate", "fixed")

# ITU-T T.81 Annex K.1 luminance quantization table.
JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def quantization_table(quality: int) -> np.ndarray:
    """Luminance table scaled by the usual quality law, entries clamped >= 1."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((JPEG_LUMA_TABLE * scale + 50.0) / 100.0)
    return np.maximum(table, 1.0)


def jpeg_surrogate(x: Image, quality: int) -> Image:
    """Block-DCT quantization round trip; no entropy coding.

    Per 8x8 block and channel: DCT-II, divide by the quality-scaled
    luminance table, round, multiply back, inverse DCT, clamp to [0, 1].
    Input dimensions are padded internally to multiples of 8.
    """
    table = quantization_table(quality)
    h, w = x.height, x.width
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    data = x.data * 255.0 - 128.0
    if pad_h or pad_w:
        data = np.pad(data, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    hh, ww = data.shape[:2]
    out = np.empty_like(data)
    for ch in range(data.shape[2]):
        blocks = data[:, :, ch].reshape(hh // 8, 8, ww // 8, 8)
        coef = scipy.fft.dctn(blocks, type=2, axes=(1, 3), norm="ortho")
        steps = table[np.newaxis, :, np.newaxis, :]
        coef = np.round(coef / steps) * steps
        rec = scipy.fft.idctn(coef, type=2, axes=(1, 3), norm="ortho")
        out[:, :, ch] = rec.reshape(hh, ww)
    out = (out[:h, :w, :] + 128.0) / 255.0
    return Image(np.clip(out, 0.0, 1.0))


class JpegSurrogate:
    """Non-linear block-quantization operator with a fixed quality factor."""

    kind = "jpeg_surrogate"
    is_linear = False

    def __init__(self, quality: int):
        quantization_table(quality)  # validates the range
        self.quality = int(quality)

    def forward(self, x: Image) -> Image:
        return jpeg_surrogate(x, self.quality)

    def adjoint(self, y: Image):
        raise ValueError("jpeg_surrogate is non-linear and has no adjoint")

    def output_shape(self, in_shape):
        return in_shape


def _range(value, name: str, lo_bound: float | None = None) -> tuple[float, float]:
    if np.isscalar(value):
        value = (float(value), float(value))
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise ValueError(f"empty {name} range [{lo}, {hi}]")
    if lo_bound is not None and lo < lo_bound:
        raise ValueError(f"{name} range must be >= {lo_bound}, got {lo}")
    return lo, hi


@dataclass(frozen=True)
class DegradationSpec:
    """Distribution over (operator, noise sigma) pairs, sampled uniformly.

    Use the family-specific constructors; `params` holds the validated
    ranges for the chosen family.
    """

    family: str
    params: dict

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown degradation family: {self.family}")

    @staticmethod
    def additive_noise(sigma) -> "DegradationSpec":
        return DegradationSpec("additive_noise", {"sigma": _range(sigma, "sigma", 0.0)})

    @staticmethod
    def blur(blur_sigma, sigma=0.0, kernel_size: int | None = None) -> "DegradationSpec":
        return DegradationSpec(
            "blur",
            {
                "blur_sigma": _range(blur_sigma, "blur_sigma", 0.0),
                "sigma": _range(sigma, "sigma", 0.0),
                "kernel_size": kernel_size,
            },
        )

    @staticmethod
    def decimation(factor: int, sigma=0.0) -> "DegradationSpec":
        if factor < 2:
            raise ValueError(f"decimation factor must be >= 2, got {factor}")
        return DegradationSpec(
            "decimation", {"factor": int(factor), "sigma": _range(sigma, "sigma", 0.0)}
        )

    @staticmethod
    def mask(drop=None, map: np.ndarray | None = None, shape=None, sigma=0.0) -> "DegradationSpec":
        if (drop is None) == (map is None):
            raise ValueError("mask spec needs exactly one of drop range or fixed map")
        params: dict = {"sigma": _range(sigma, "sigma", 0.0)}
        if map is not None:
            params["map"] = np.asarray(map).astype(bool)
        else:
            params["drop"] = _range(drop, "drop", 0.0)
            if params["drop"][1] > 1.0:
                raise ValueError("drop probability range must lie in [0, 1]")
            if shape is None:
                raise ValueError("mask spec with a drop range needs the image shape")
            params["shape"] = (int(shape[0]), int(shape[1]))
        return DegradationSpec("mask", params)

    @staticmethod
    def jpeg(quality=(20, 100), sigma=0.0) -> "DegradationSpec":
        q = _range(quality, "quality", 1.0)
        if q[1] > 100:
            raise ValueError("quality range must lie in [1, 100]")
        return DegradationSpec("jpeg_surrogate", {"quality": q, "sigma": _range(sigma, "sigma", 0.0)})

    @staticmethod
    def fixed(op, sigma: float = 0.0) -> "DegradationSpec":
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        return DegradationSpec("fixed", {"op": op, "sigma": float(sigma)})

    def operator_kind(self) -> str:
        """Kind of operator this spec samples (e.g. for compatibility checks)."""
        if self.family == "fixed":
            return self.params["op"].kind
        return {
            "additive_noise": "identity",
            "blur": "convolution",
            "decimation": "decimation",
            "mask": "mask",
            "jpeg_surrogate": "jpeg_surrogate",
        }[self.family]


@dataclass(frozen=True)
class Degradation:
    """A concrete (operator, noise sigma) pair drawn from a spec."""

    op: LinearOp | JpegSurrogate
    noise_sigma: float

    def apply(self, x: Image, rng: Rng) -> Image:
        """H x + w with w ~ N(0, sigma^2 I); sigma = 0 draws nothing."""
        y = self.op.forward(x)
        if self.noise_sigma > 0:
            y = Image(y.data + rng.normal(y.shape, self.noise_sigma))
        return y


def sample(spec: DegradationSpec, rng: Rng) -> Degradation:
    """Draw a Degradation with parameters uniform over the spec's ranges."""
    p = spec.params
    if spec.family == "fixed":
        return Degradation(p["op"], p["sigma"])
    sigma = float(rng.uniform(*p["sigma"]))
    if spec.family == "additive_noise":
        return Degradation(Identity(), sigma)
    if spec.family == "blur":
        blur_sigma = float(rng.uniform(*p["blur_sigma"]))
        blur_sigma = max(blur_sigma, 1e-6)
        size = p["kernel_size"] or default_kernel_size(blur_sigma)
        return Degradation(Convolution(gaussian_kernel(blur_sigma, size)), sigma)
    if spec.family == "decimation":
        return Degradation(Decimation(p["factor"]), sigma)
    if spec.family == "mask":
        if "map" in p:
            return Degradation(Mask(p["map"]), sigma)
        drop = float(rng.uniform(*p["drop"]))
        observed = rng.uniform(0.0, 1.0, p["shape"]) >= drop
        return Degradation(Mask(observed), sigma)
    if spec.family == "jpeg_surrogate":
        quality = int(rng.integers(int(round(p["quality"][0])), int(round(p["quality"][1]))))
        return Degradation(JpegSurrogate(quality), sigma)
    raise ValueError(f"unknown family {spec.family}")
