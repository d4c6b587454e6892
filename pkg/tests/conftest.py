import numpy as np
import pytest

from firekit import Image, Rng
from firekit.data import data_path
from firekit.fileio import read_image
from firekit.restorers import tv_denoise


@pytest.fixture(scope="session")
def crop() -> Image:
    return read_image(str(data_path("crop64.png")))


@pytest.fixture(scope="session")
def smooth(crop) -> Image:
    return tv_denoise(crop, 0.4)


@pytest.fixture()
def rng() -> Rng:
    return Rng(1234)


def random_image(rng: Rng, h: int = 12, w: int = 12, c: int = 1, lo=0.0, hi=1.0) -> Image:
    return Image(rng.uniform(lo, hi, (h, w, c)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            verdict = "PASS" if status == "passed" else "FAIL"
            lines.append(f"[ACCEPTANCE] {name}: {verdict}")
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
