"""Image and tensor file I/O.

Supported formats: 8-bit PNG (via Pillow), binary PPM/PGM, a raw float32
tensor dump (magic "FIRT"), plain-text kernel matrices, and PGM masks where
value > 127 means observed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .image import Image

__all__ = [
    "read_image",
    "write_image",
    "read_tensor",
    "write_tensor",
    "load_kernel",
    "save_kernel",
    "load_mask",
]

TENSOR_MAGIC = b"FIRT"


def write_image(path, img: Image):
    """Write an image as 8-bit PNG or binary PPM/PGM, by extension."""
    path = Path(path)
    arr = np.clip(np.round(img.data * 255.0), 0, 255).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".png":
        if img.channels == 1:
            PILImage.fromarray(arr[:, :, 0], mode="L").save(path)
        else:
            PILImage.fromarray(arr, mode="RGB").save(path)
    elif suffix in (".ppm", ".pgm"):
        _write_pnm(path, arr)
    else:
        raise ValueError(f"unsupported image format: {path.suffix}")


def read_image(path) -> Image:
    """Read a PNG or binary PPM/PGM image, scaled to [0, 1] by /255."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        with PILImage.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
            arr = np.asarray(im, dtype=np.uint8)
    elif suffix in (".ppm", ".pgm"):
        arr = _read_pnm(path)
    else:
        raise ValueError(f"unsupported image format: {path.suffix}")
    return Image(arr.astype(np.float64) / 255.0)


def _write_pnm(path: Path, arr: np.ndarray):
    channels = arr.shape[2]
    if channels == 3:
        header = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n"
        payload = arr.tobytes()
    else:
        header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n"
        payload = arr[:, :, 0].tobytes()
    path.write_bytes(header.encode("ascii") + payload)


def _read_pnm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    fields, offset = [], 0
    while len(fields) < 4:
        while offset < len(raw) and raw[offset : offset + 1].isspace():
            offset += 1
        if raw[offset : offset + 1] == b"#":
            while offset < len(raw) and raw[offset : offset + 1] != b"\n":
                offset += 1
            continue
        start = offset
        while offset < len(raw) and not raw[offset : offset + 1].isspace():
            offset += 1
        fields.append(raw[start:offset])
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    offset += 1  # single whitespace after maxval
    if maxval != 255:
        raise ValueError(f"only 8-bit PNM supported, maxval={maxval}")
    if magic == b"P6":
        data = np.frombuffer(raw, dtype=np.uint8, count=height * width * 3, offset=offset)
        return data.reshape(height, width, 3)
    if magic == b"P5":
        data = np.frombuffer(raw, dtype=np.uint8, count=height * width, offset=offset)
        return data.reshape(height, width, 1)
    raise ValueError(f"unsupported PNM magic: {magic!r}")


def write_tensor(path, arr: np.ndarray):
    """Dump an array as magic 'FIRT', u32 rank, u64 dims, little-endian f32."""
    arr = np.asarray(arr)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TENSOR_MAGIC:
            raise ValueError(f"bad tensor magic: {magic!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(fh.read(count * 4), dtype="<f4", count=count)
    return data.reshape(dims).astype(np.float64)


def load_kernel(path) -> np.ndarray:
    """Load a kernel from rows of space-separated reals."""
    kernel = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return kernel


def save_kernel(path, kernel: np.ndarray):
    np.savetxt(path, np.atleast_2d(kernel), fmt="%.17g")


def load_mask(path) -> np.ndarray:
    """Read a PGM mask; value > 127 means observed.  Returns (h, w) bool."""
    arr = _read_pnm(Path(path))
    if arr.shape[2] != 1:
        raise ValueError("mask must be a single-channel PGM")
    return arr[:, :, 0] > 127
