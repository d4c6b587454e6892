"""The restorers the server can expose.

Each mode is a plain function from a float64 tensor to a float64
tensor.  Image modes accept rank-2 (gray) and rank-3 (height, width,
channels) tensors and treat the image as periodic, so smoothing here
agrees with any client that filters by pointwise multiplication in the
Fourier domain.

To mount your own model, use ``custom`` mode with an entry point string
``package.module:function``; the named function receives the decoded
tensor and must return an array-like of the same spirit (any shape and
rank the client will accept).  Heavy lifting — loading weights, moving
to an accelerator — belongs in the module's import, which runs once.
"""

from __future__ import annotations

import importlib
from typing import Callable

import numpy as np

Mode = Callable[[np.ndarray], np.ndarray]


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian covering +-3 sigma, odd size, min 3."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    size = max(3, 2 * int(np.ceil(3.0 * sigma)) + 1)
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def periodic_convolve(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Centered circular convolution of one 2-D plane with a kernel."""
    h, w = plane.shape
    kh, kw = kernel.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kernel.shape} larger than image {plane.shape}")
    padded = np.zeros((h, w))
    padded[:kh, :kw] = kernel
    # shift the kernel center to the origin so convolution is centered
    padded = np.roll(padded, (-((kh - 1) // 2), -((kw - 1) // 2)), axis=(0, 1))
    transfer = np.fft.fft2(padded)
    return np.real(np.fft.ifft2(np.fft.fft2(plane) * transfer))


def _per_channel(data: np.ndarray, filt: Callable[[np.ndarray], np.ndarray]):
    if data.ndim == 2:
        return filt(data)
    if data.ndim == 3:
        out = np.empty_like(data)
        for ch in range(data.shape[2]):
            out[:, :, ch] = filt(data[:, :, ch])
        return out
    raise ValueError(f"expected a rank-2 or rank-3 image tensor, got rank {data.ndim}")


def echo_mode() -> Mode:
    def run(data: np.ndarray) -> np.ndarray:
        return data

    return run


def gaussian_mode(sigma: float) -> Mode:
    kernel = gaussian_kernel(sigma)

    def run(data: np.ndarray) -> np.ndarray:
        return _per_channel(data, lambda plane: periodic_convolve(plane, kernel))

    return run


def median_mode(window: int) -> Mode:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    half = window // 2
    shifts = [(dy, dx) for dy in range(-half, half + 1) for dx in range(-half, half + 1)]

    def filt(plane: np.ndarray) -> np.ndarray:
        stack = np.stack([np.roll(plane, s, axis=(0, 1)) for s in shifts])
        return np.median(stack, axis=0)

    def run(data: np.ndarray) -> np.ndarray:
        return _per_channel(data, filt)

    return run


def custom_mode(entry: str) -> Mode:
    """Load ``package.module:function`` and serve it as the restorer."""
    module_name, _, attr = entry.partition(":")
    if not module_name or not attr:
        raise ValueError(f"entry must look like package.module:function, got {entry!r}")
    module = importlib.import_module(module_name)
    hook = getattr(module, attr)
    if not callable(hook):
        raise ValueError(f"{entry!r} is not callable")

    def run(data: np.ndarray) -> np.ndarray:
        return np.asarray(hook(data), dtype=np.float64)

    return run
