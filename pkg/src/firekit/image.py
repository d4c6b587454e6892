"""Image container, seeded randomness, and quality metrics.

Images are (height, width, channels) float64 arrays, channels-last, with a
nominal [0, 1] range.  All public constructors reject NaN/Inf so that any
non-finite value downstream is caught at the operation that produced it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Image", "Rng", "psnr", "ssim", "l2_norm"]

# PSNR returned for a zero-error pair; keeps traces plottable.
PSNR_SENTINEL = 100.0


@dataclass(frozen=True)
class Image:
    """A real-valued 2-D image with 1 or 3 channels.

    The wrapped array is never mutated after construction; arithmetic
    returns new instances, so images are safe to share across workers.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"image must be 2-D or 3-D, got ndim={arr.ndim}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @staticmethod
    def zeros(height: int, width: int, channels: int = 1) -> "Image":
        return Image(np.zeros((height, width, channels)))

    @staticmethod
    def full(height: int, width: int, value: float, channels: int = 1) -> "Image":
        return Image(np.full((height, width, channels), float(value)))

    def clip(self, lo: float = 0.0, hi: float = 1.0) -> "Image":
        return Image(np.clip(self.data, lo, hi))

    def __add__(self, other):
        return Image(self.data + _raw(other))

    def __sub__(self, other):
        return Image(self.data - _raw(other))

    def __mul__(self, other):
        return Image(self.data * _raw(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Image(self.data / _raw(other))

    def __neg__(self):
        return Image(-self.data)


def _raw(x):
    return x.data if isinstance(x, Image) else x


class Rng:
    """Counter-based random stream, splittable by name.

    Built on Philox keyed by SHA-256 of (seed, path), so a stream is fully
    determined by the root seed and the chain of split names.  Splitting
    does not consume parent state: two splits with the same name yield
    identical streams, which is what makes parallel and serial evaluation
    orders agree bit-for-bit.
    """

    def __init__(self, seed: int, _path: bytes = b""):
        self.seed = int(seed)
        self._path = _path
        digest = hashlib.sha256(
            self.seed.to_bytes(8, "little", signed=True) + _path
        ).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, name: str) -> "Rng":
        """Derive an independent child stream keyed by `name`."""
        return Rng(self.seed, self._path + b"/" + name.encode("utf-8"))

    def normal(self, shape=(), sigma: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, 1.0, size=shape) * sigma

    def uniform(self, lo: float, hi: float, shape=()):
        return self._gen.uniform(lo, hi, size=shape)

    def integers(self, lo: int, hi: int, shape=()):
        """Uniform integers in [lo, hi] inclusive."""
        return self._gen.integers(lo, hi, size=shape, endpoint=True)


def _check_shapes(x: Image, ref: Image):
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")


def psnr(x: Image, ref: Image, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; 100 dB when the images are equal."""
    _check_shapes(x, ref)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x.data - ref.data) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return 10.0 * np.log10(peak * peak / mse)


def l2_norm(x: Image) -> float:
    """Euclidean norm over all entries."""
    return float(np.linalg.norm(x.data.ravel()))


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _valid_corr(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Direct sliding-window correlation, valid positions only.  Window sizes
    # are tiny (11x11) so sliding_window_view is exact and fast enough.
    view = np.lib.stride_tricks.sliding_window_view(x, w.shape)
    return np.einsum("ijkl,kl->ij", view, w)


def ssim(x: Image, ref: Image, peak: float = 1.0) -> float:
    """Mean structural similarity, single scale.

    11x11 Gaussian window with sigma 1.5, C1=(0.01*peak)^2, C2=(0.03*peak)^2,
    averaged over valid window positions and channels.
    """
    _check_shapes(x, ref)
    w = _ssim_window()
    if x.height < w.shape[0] or x.width < w.shape[1]:
        raise ValueError(
            f"image {x.height}x{x.width} smaller than the {w.shape[0]}x{w.shape[1]} window"
        )
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    vals = []
    for ch in range(x.channels):
        a = x.data[:, :, ch]
        b = ref.data[:, :, ch]
        mu_a = _valid_corr(a, w)
        mu_b = _valid_corr(b, w)
        var_a = _valid_corr(a * a, w) - mu_a**2
        var_b = _valid_corr(b * b, w) - mu_b**2
        cov = _valid_corr(a * b, w) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
