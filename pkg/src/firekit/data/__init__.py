"""Bundled demo assets: a 64x64 test image, kernels, and example configs."""

from importlib import resources
from pathlib import Path

__all__ = ["data_path"]


def data_path(name: str) -> Path:
    """Absolute path of a bundled data file (e.g. "crop64.png")."""
    p = Path(str(resources.files(__package__).joinpath(name)))
    if not p.exists():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return p
