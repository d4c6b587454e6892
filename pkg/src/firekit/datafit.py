"""Proximal operators of the quadratic data-fidelity term.

For f(x) = 0.5 ||Ax - y||^2 the prox of lam*f has three routes: an exact
FFT form when A diagonalizes in Fourier, a closed form for masks, and a
conjugate-gradient fallback for any linear A.  No clamping happens here;
that keeps the optimality conditions exactly testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image, l2_norm
from .operators import LinearOp, Mask

__all__ = ["DataFit", "ConvergenceError", "prox_fft", "prox_mask", "prox_cg", "prox"]


class ConvergenceError(RuntimeError):
    """Iterative solve missed its tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DataFit:
    """Quadratic fidelity 0.5||Ax - y||^2 with prox weight lam."""

    A: LinearOp
    y: Image
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    def value(self, x: Image) -> float:
        return 0.5 * l2_norm(self.A.forward(x) - self.y) ** 2

    def gradient(self, x: Image) -> Image:
        return self.A.adjoint(self.A.forward(x) - self.y)


def prox_fft(df: DataFit, u: Image) -> Image:
    """Exact prox when A has a Fourier transfer function."""
    if df.lam == 0:
        return u
    k = df.A.transfer((u.height, u.width))
    if k is None:
        raise ValueError(
            f"operator kind '{df.A.kind}' has no transfer function; use prox_cg"
        )
    denom = df.lam * np.abs(k) ** 2 + 1.0
    out = np.empty_like(u.data)
    for ch in range(u.channels):
        num = df.lam * np.conj(k) * np.fft.fft2(df.y.data[:, :, ch]) + np.fft.fft2(
            u.data[:, :, ch]
        )
        out[:, :, ch] = np.real(np.fft.ifft2(num / denom))
    return Image(out)


def prox_mask(df: DataFit, u: Image) -> Image:
    """Closed form for diagonal A: observed pixels average toward y."""
    if not isinstance(df.A, Mask):
        raise ValueError(f"prox_mask needs a mask operator, got '{df.A.kind}'")
    if df.lam == 0:
        return u
    observed = df.A.map[:, :, np.newaxis]
    blended = (df.lam * df.y.data + u.data) / (df.lam + 1.0)
    return Image(np.where(observed, blended, u.data))


def prox_cg(df: DataFit, u: Image, tol: float = 1e-6, max_iters: int = 200) -> Image:
    """Conjugate gradients on (lam AtA + I) x = lam At y + u, operator calls only."""
    if df.lam == 0:
        return u

    def matvec(x: Image) -> Image:
        return df.lam * df.A.adjoint(df.A.forward(x)) + x

    b = df.lam * df.A.adjoint(df.y) + u
    b_norm = l2_norm(b)
    if b_norm == 0:
        return Image.zeros(u.height, u.width, u.channels)
    x = u
    r = b - matvec(x)
    p = r
    rs = l2_norm(r) ** 2
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * b_norm:
            return x
        ap = matvec(p)
        alpha = rs / float((p.data * ap.data).sum())
        x = x + alpha * p
        r = r - alpha * ap
        rs_next = l2_norm(r) ** 2
        p = r + (rs_next / rs) * p
        rs = rs_next
    if np.sqrt(rs) <= tol * b_norm:
        return x
    raise ConvergenceError(
        f"prox_cg did not reach tol {tol} in {max_iters} iterations",
        residual=float(np.sqrt(rs) / b_norm),
    )


def prox(df: DataFit, u: Image, route: str = "auto", **kwargs) -> Image:
    """Dispatch to the cheapest exact prox for the operator at hand."""
    if route == "auto":
        if isinstance(df.A, Mask):
            route = "mask"
        elif df.A.transfer((u.height, u.width)) is not None:
            route = "fft"
        else:
            route = "cg"
    if route == "fft":
        return prox_fft(df, u)
    if route == "mask":
        return prox_mask(df, u)
    if route == "cg":
        return prox_cg(df, u, **kwargs)
    raise ValueError(f"unknown prox route: {route!r}")
