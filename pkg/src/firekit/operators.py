"""Linear measurement and degradation operators.

All convolutions use periodic (circular) boundary, so every convolution-type
operator is diagonal in the Fourier basis and exposes its exact transfer
function.  Adjoints are exact: conjugate transfer for convolutions, the same
map for masks, blur-transpose-then-correlate for decimation.
"""

from __future__ import annotations

import numpy as np

from .image import Image

__all__ = [
    "gaussian_kernel",
    "LinearOp",
    "Identity",
    "Convolution",
    "Mask",
    "Decimation",
    "Composition",
]


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Separable 2-D Gaussian kernel, normalized to sum exactly 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"size must be a positive odd integer, got {size}")
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def default_kernel_size(sigma: float) -> int:
    """Odd size covering +-3 sigma."""
    return max(3, 2 * int(np.ceil(3.0 * sigma)) + 1)


class LinearOp:
    """Base class: forward/adjoint maps between images."""

    kind = "abstract"
    is_linear = True

    def forward(self, x: Image) -> Image:
        raise NotImplementedError

    def adjoint(self, y: Image) -> Image:
        raise NotImplementedError

    def transfer(self, shape: tuple[int, int]) -> np.ndarray | None:
        """Fourier transfer function for (h, w), or None if not diagonal."""
        return None

    def output_shape(self, in_shape):
        return in_shape


class Identity(LinearOp):
    kind = "identity"

    def forward(self, x: Image) -> Image:
        return x

    def adjoint(self, y: Image) -> Image:
        return y

    def transfer(self, shape):
        return np.ones(shape, dtype=np.complex128)


class Convolution(LinearOp):
    """Centered periodic convolution with a 2-D kernel, applied per channel."""

    kind = "convolution"

    def __init__(self, kernel: np.ndarray):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2:
            raise ValueError("kernel must be 2-D")
        self.kernel = kernel

    def transfer(self, shape):
        h, w = shape
        kh, kw = self.kernel.shape
        if kh > h or kw > w:
            raise ValueError(f"kernel {self.kernel.shape} larger than image {shape}")
        padded = np.zeros((h, w))
        padded[:kh, :kw] = self.kernel
        # shift the kernel center to the origin so convolution is centered
        padded = np.roll(padded, (-((kh - 1) // 2), -((kw - 1) // 2)), axis=(0, 1))
        return np.fft.fft2(padded)

    def _apply_transfer(self, x: Image, k: np.ndarray) -> Image:
        out = np.empty_like(x.data)
        for ch in range(x.channels):
            out[:, :, ch] = np.real(np.fft.ifft2(np.fft.fft2(x.data[:, :, ch]) * k))
        return Image(out)

    def forward(self, x: Image) -> Image:
        return self._apply_transfer(x, self.transfer((x.height, x.width)))

    def adjoint(self, y: Image) -> Image:
        return self._apply_transfer(y, np.conj(self.transfer((y.height, y.width))))


class Mask(LinearOp):
    """Per-pixel binary mask (True = observed), shared by all channels."""

    kind = "mask"

    def __init__(self, map: np.ndarray):
        map = np.asarray(map)
        if map.ndim != 2:
            raise ValueError("mask map must be 2-D")
        self.map = map.astype(bool)

    def forward(self, x: Image) -> Image:
        if x.data.shape[:2] != self.map.shape:
            raise ValueError(f"mask {self.map.shape} vs image {x.shape}")
        return Image(x.data * self.map[:, :, np.newaxis])

    # diagonal 0/1 operator is self-adjoint
    adjoint = forward


class Decimation(LinearOp):
    """Anti-alias Gaussian blur followed by subsampling by an integer factor.

    The adjoint is zero-fill upsampling followed by correlation with the
    anti-alias kernel.
    """

    kind = "decimation"

    def __init__(self, factor: int, anti_alias: np.ndarray | None = None):
        if factor < 2:
            raise ValueError(f"decimation factor must be >= 2, got {factor}")
        self.factor = int(factor)
        if anti_alias is None:
            sigma = 0.5 * factor
            anti_alias = gaussian_kernel(sigma, default_kernel_size(sigma))
        self.blur = Convolution(anti_alias)

    @property
    def anti_alias_kernel(self) -> np.ndarray:
        return self.blur.kernel

    def forward(self, x: Image) -> Image:
        if x.height % self.factor or x.width % self.factor:
            raise ValueError(
                f"image {x.height}x{x.width} not divisible by factor {self.factor}"
            )
        smoothed = self.blur.forward(x)
        return Image(smoothed.data[:: self.factor, :: self.factor, :])

    def adjoint(self, y: Image) -> Image:
        f = self.factor
        up = np.zeros((y.height * f, y.width * f, y.channels))
        up[::f, ::f, :] = y.data
        return self.blur.adjoint(Image(up))

    def output_shape(self, in_shape):
        h, w, c = in_shape
        return (h // self.factor, w // self.factor, c)


class Composition(LinearOp):
    """Sequential application: forward runs parts in order."""

    kind = "composition"

    def __init__(self, parts):
        if not parts:
            raise ValueError("composition needs at least one operator")
        self.parts = list(parts)

    def forward(self, x: Image) -> Image:
        for op in self.parts:
            x = op.forward(x)
        return x

    def adjoint(self, y: Image) -> Image:
        for op in reversed(self.parts):
            y = op.adjoint(y)
        return y

    def transfer(self, shape):
        total = np.ones(shape, dtype=np.complex128)
        for op in self.parts:
            k = op.transfer(shape)
            if k is None:
                return None
            total = total * k
        return total

    def output_shape(self, in_shape):
        for op in self.parts:
            in_shape = op.output_shape(in_shape)
        return in_shape
