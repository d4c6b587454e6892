import numpy as np
import pytest

from prior_server.modes import (
    custom_mode,
    echo_mode,
    gaussian_kernel,
    gaussian_mode,
    median_mode,
    periodic_convolve,
)
from prior_server.server import ServerConfig


def _convolve_loops(plane, kernel):
    """Direct double-loop circular convolution, the slow reference."""
    h, w = plane.shape
    kh, kw = kernel.shape
    out = np.zeros_like(plane)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    src_i = (i - (a - (kh - 1) // 2)) % h
                    src_j = (j - (b - (kw - 1) // 2)) % w
                    acc += kernel[a, b] * plane[src_i, src_j]
            out[i, j] = acc
    return out


def test_echo_returns_input():
    rng = np.random.default_rng(2)
    arr = rng.uniform(-1.0, 1.0, (4, 5))
    assert np.array_equal(echo_mode()(arr), arr)


def test_gaussian_kernel_is_normalized_and_sized():
    k = gaussian_kernel(1.0)
    assert k.shape == (7, 7)  # covers +-3 sigma
    assert abs(k.sum() - 1.0) <= 1e-12
    assert np.array_equal(k, k.T)
    with pytest.raises(ValueError):
        gaussian_kernel(0.0)


def test_periodic_convolution_matches_loop_reference():
    rng = np.random.default_rng(3)
    plane = rng.uniform(0.0, 1.0, (8, 8))
    kernel = gaussian_kernel(0.7)
    fast = periodic_convolve(plane, kernel)
    slow = _convolve_loops(plane, kernel)
    assert np.max(np.abs(fast - slow)) <= 1e-12


def test_gaussian_preserves_mean_and_smooths():
    rng = np.random.default_rng(4)
    arr = rng.uniform(0.0, 1.0, (10, 10))
    out = gaussian_mode(1.2)(arr)
    assert abs(out.mean() - arr.mean()) <= 1e-12  # kernel sums to one
    assert out.var() < arr.var()


def test_gaussian_applies_per_channel():
    rng = np.random.default_rng(5)
    arr = rng.uniform(0.0, 1.0, (8, 8, 3))
    out = gaussian_mode(0.9)(arr)
    run = gaussian_mode(0.9)
    for ch in range(3):
        assert np.array_equal(out[:, :, ch], run(arr[:, :, ch]))


def test_image_modes_reject_odd_ranks():
    with pytest.raises(ValueError):
        gaussian_mode(1.0)(np.zeros(7))
    with pytest.raises(ValueError):
        median_mode(3)(np.zeros(()))


def test_median_matches_neighborhood_reference():
    rng = np.random.default_rng(6)
    plane = rng.uniform(0.0, 1.0, (7, 9))
    out = median_mode(3)(plane)
    h, w = plane.shape
    for i in range(h):
        for j in range(w):
            hood = [
                plane[(i + dy) % h, (j + dx) % w]
                for dy in (-1, 0, 1)
                for dx in (-1, 0, 1)
            ]
            assert out[i, j] == np.median(hood)


def test_median_kills_isolated_outlier():
    plane = np.full((8, 8), 0.5)
    plane[3, 4] = 9.0
    out = median_mode(3)(plane)
    assert np.all(out == 0.5)


def test_median_window_one_is_identity():
    rng = np.random.default_rng(7)
    plane = rng.uniform(0.0, 1.0, (5, 5))
    assert np.array_equal(median_mode(1)(plane), plane)


def test_median_rejects_even_window():
    with pytest.raises(ValueError):
        median_mode(4)
    with pytest.raises(ValueError):
        median_mode(-1)


def test_custom_mode_loads_entry_point():
    negate = custom_mode("numpy:negative")
    arr = np.array([[1.0, -2.0]])
    assert np.array_equal(negate(arr), -arr)


def test_custom_mode_rejects_bad_entries():
    with pytest.raises(ValueError):
        custom_mode("numpy.negative")  # missing the colon
    with pytest.raises(ValueError):
        custom_mode("numpy:pi")  # not callable
    with pytest.raises(ModuleNotFoundError):
        custom_mode("no_such_module:fn")
    with pytest.raises(AttributeError):
        custom_mode("numpy:no_such_function")


def test_config_requires_matching_parameters():
    ServerConfig(mode="echo")
    ServerConfig(mode="gaussian", sigma=1.0)
    ServerConfig(mode="median", window=3)
    ServerConfig(mode="custom", entry="numpy:negative")
    with pytest.raises(ValueError):
        ServerConfig(mode="gaussian")  # sigma missing
    with pytest.raises(ValueError):
        ServerConfig(mode="echo", sigma=1.0)  # parameter from another mode
    with pytest.raises(ValueError):
        ServerConfig(mode="median", window=3, entry="numpy:negative")
    with pytest.raises(ValueError):
        ServerConfig(mode="warp")


def test_config_family_defaults_to_mode():
    assert ServerConfig(mode="echo").family_tag() == "echo"
    assert ServerConfig(mode="median", window=3, family="denoise").family_tag() == "denoise"
