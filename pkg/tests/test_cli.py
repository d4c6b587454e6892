import json
import shlex
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from firekit import Image, Rng
from firekit.cli import main
from firekit.data import data_path
from firekit.fileio import write_image
from firekit.restorers import tv_denoise

from conftest import random_image
from test_remote import _ECHO_SERVER


@pytest.fixture()
def workdir(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    rng = Rng(900)
    for name in ("alpha", "beta"):
        rough = random_image(rng.split(name), 16, 16, lo=0.05, hi=0.95)
        write_image(imgs / f"{name}.png", tv_denoise(rough, 0.4))
    return tmp_path


def _write_config(tmp_path, body, name="cfg.json"):
    body = {"schema": 1, **body}
    p = tmp_path / name
    p.write_text(json.dumps(body, indent=2))
    return str(p)


def _denoise_config(workdir, **extra):
    imgs = workdir / "imgs"
    body = {
        "inputs": [str(imgs / "alpha.png")],
        "problem": {"operator": "identity", "noise_sigma": 0.05},
        "priors": [
            {
                "restorer": "tv",
                "params": {"strength": 0.08},
                "gamma": 0.5,
                "spec": {"family": "additive_noise", "sigma": [0.01, 0.05]},
            }
        ],
        "solver": {"lam": 1.0, "iters": 4, "seed": 11},
    }
    body.update(extra)
    return _write_config(workdir, body)


def _read_tree(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------- exit code 2


def test_missing_config_file_names_path(tmp_path, capsys):
    rc = main(["restore", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "nope.json" in capsys.readouterr().err


def test_invalid_json_config(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["restore", "--config", str(p)]) == 2
    assert "JSON" in capsys.readouterr().err


def test_wrong_schema_rejected(tmp_path, capsys):
    p = tmp_path / "v2.json"
    p.write_text(json.dumps({"schema": 2, "inputs": []}))
    assert main(["restore", "--config", str(p)]) == 2
    assert "schema" in capsys.readouterr().err


def test_missing_input_file_names_path(workdir, capsys):
    cfg = _write_config(workdir, {"inputs": [str(workdir / "ghost.png")], "priors": []})
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "ghost.png" in capsys.readouterr().err


def test_empty_input_directory(workdir, capsys):
    empty = workdir / "empty"
    empty.mkdir()
    cfg = _write_config(workdir, {"inputs": [str(empty)], "priors": []})
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "no images" in capsys.readouterr().err


def test_unknown_operator(workdir, capsys):
    cfg = _denoise_config(workdir, problem={"operator": "teleport"})
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "teleport" in capsys.readouterr().err


def test_unknown_spec_family(workdir, capsys):
    cfg = _denoise_config(
        workdir,
        priors=[{"restorer": "tv", "gamma": 0.5, "spec": {"family": "warp"}}],
    )
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "warp" in capsys.readouterr().err


def test_unknown_restorer_id(workdir, capsys):
    cfg = _denoise_config(
        workdir,
        priors=[{"restorer": "magic", "gamma": 0.5, "spec": {"family": "additive_noise"}}],
    )
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "magic" in capsys.readouterr().err


def test_prior_missing_spec(workdir, capsys):
    cfg = _denoise_config(workdir, priors=[{"restorer": "tv", "gamma": 0.5}])
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "spec" in capsys.readouterr().err


def test_weights_over_one_rejected(workdir, capsys):
    prior = {
        "restorer": "tv",
        "gamma": 0.7,
        "spec": {"family": "additive_noise", "sigma": [0.0, 0.05]},
    }
    cfg = _denoise_config(workdir, priors=[prior, dict(prior)])
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "sum" in capsys.readouterr().err


def test_blur_kernel_file_with_range_sigma_rejected(workdir, capsys):
    cfg = _denoise_config(
        workdir,
        priors=[
            {
                "restorer": "wiener",
                "gamma": 0.5,
                "spec": {
                    "family": "blur",
                    "kernel_file": "data:kernels/lowpass64.txt",
                    "sigma": [0.0, 0.1],
                },
            }
        ],
    )
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "scalar" in capsys.readouterr().err


def test_threads_must_be_positive(workdir, capsys):
    cfg = _denoise_config(workdir)
    assert main(["restore", "--config", cfg, "--out", str(workdir / "out"), "--threads", "0"]) == 2


def test_fixedpoint_requires_a_prior(workdir, capsys):
    cfg = _denoise_config(workdir, priors=[])
    assert main(["fixedpoint", "--config", cfg, "--out", str(workdir / "out")]) == 2
    assert "prior" in capsys.readouterr().err


def test_serve_check_requires_address(capsys):
    assert main(["serve-check"]) == 2
    assert "address" in capsys.readouterr().err


def test_serve_check_malformed_address(capsys):
    assert main(["serve-check", "--address", "not-a-thing"]) == 2


# ---------------------------------------------------------------- restore


def test_restore_outputs_and_metrics(workdir, capsys):
    out = workdir / "out"
    cfg = _denoise_config(workdir)
    assert main(["restore", "--config", cfg, "--out", str(out)]) == 0
    for suffix in ("degraded", "pinv", "restored"):
        assert (out / f"alpha_{suffix}.png").is_file()
    trace = (out / "alpha_trace.csv").read_text().strip().split("\n")
    assert trace[0] == "iter,prior_1_residual,objective,F_norm,psnr"
    assert len(trace) == 1 + 4  # header + one row per iteration
    metrics = (out / "metrics.csv").read_text().strip().split("\n")
    assert metrics[0] == "image,psnr,ssim,psnr_pinv,ssim_pinv"
    name, p, s, pp, sp = metrics[1].split(",")
    assert name == "alpha"
    # denoising beats the prior-free baseline, which here is the noisy input
    assert float(p) > float(pp)
    assert "restored 1 image(s)" in capsys.readouterr().out


def test_restore_rerun_is_byte_identical(workdir):
    cfg = _denoise_config(workdir)
    a, b = workdir / "a", workdir / "b"
    assert main(["restore", "--config", cfg, "--out", str(a)]) == 0
    assert main(["restore", "--config", cfg, "--out", str(b)]) == 0
    assert _read_tree(a) == _read_tree(b)


def test_restore_threads_do_not_change_results(workdir):
    imgs = workdir / "imgs"
    cfg = _denoise_config(workdir, inputs=[str(imgs / "alpha.png"), str(imgs / "beta.png")])
    one, four = workdir / "t1", workdir / "t4"
    assert main(["restore", "--config", cfg, "--out", str(one), "--threads", "1"]) == 0
    assert main(["restore", "--config", cfg, "--out", str(four), "--threads", "4"]) == 0
    assert _read_tree(one) == _read_tree(four)


def test_restore_seed_flag_overrides_config(workdir):
    cfg = _denoise_config(workdir)
    s11, s99 = workdir / "s11", workdir / "s99"
    # config seed is 11, so an explicit 11 reproduces the default run
    assert main(["restore", "--config", cfg, "--out", str(s11), "--seed", "11"]) == 0
    assert main(["restore", "--config", cfg, "--out", str(s99), "--seed", "99"]) == 0
    base = workdir / "base"
    assert main(["restore", "--config", cfg, "--out", str(base)]) == 0
    assert _read_tree(s11) == _read_tree(base)
    assert _read_tree(s99) != _read_tree(base)


def test_restore_without_priors_reproduces_measurement(workdir):
    out = workdir / "out"
    cfg = _denoise_config(
        workdir,
        problem={"operator": "identity", "noise_sigma": 0.0},
        priors=[],
        solver={"lam": 100.0, "iters": 3, "seed": 1},
    )
    assert main(["restore", "--config", cfg, "--out", str(out)]) == 0
    row = (out / "metrics.csv").read_text().strip().split("\n")[1].split(",")
    assert float(row[1]) >= 80.0  # nothing to undo, nothing lost


def test_restore_mask_and_conditioned_prior(workdir):
    out = workdir / "out"
    cfg = _denoise_config(
        workdir,
        problem={"operator": "mask", "drop": 0.3, "noise_sigma": 0.0},
        priors=[{"restorer": "inpaint", "gamma": 0.5, "conditioned": True}],
        solver={"lam": 1.0, "iters": 4, "seed": 2},
    )
    assert main(["restore", "--config", cfg, "--out", str(out)]) == 0
    row = (out / "metrics.csv").read_text().strip().split("\n")[1].split(",")
    assert float(row[1]) > float(row[3])  # inpainting beats the masked image


def test_restore_decimation_with_sr_prior(workdir):
    out = workdir / "out"
    cfg = _denoise_config(
        workdir,
        problem={"operator": "decimation", "factor": 2, "noise_sigma": 0.0},
        priors=[
            {
                "restorer": "sr2",
                "gamma": 0.5,
                "spec": {"family": "decimation", "factor": 2},
            }
        ],
        solver={"lam": 0.5, "iters": 3, "seed": 3},
    )
    assert main(["restore", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "alpha_restored.png").is_file()


def test_restore_jpeg_spec_prior(workdir):
    out = workdir / "out"
    cfg = _denoise_config(
        workdir,
        priors=[
            {
                "restorer": "dct",
                "params": {"threshold": 0.01},
                "gamma": 0.4,
                "spec": {"family": "jpeg", "quality": [60, 90]},
            }
        ],
    )
    assert main(["restore", "--config", cfg, "--out", str(out)]) == 0


# ---------------------------------------------------------------- fixedpoint


def test_fixedpoint_outputs(workdir, capsys):
    out = workdir / "out"
    cfg = str(data_path("configs/fixedpoint_wiener.json"))
    assert main(["fixedpoint", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "fixedpoint.csv").read_text().strip().split("\n")
    assert lines[0] == "iter,compose_on,compose_off"
    assert len(lines) == 1 + 21  # start row plus one per iteration
    on = [float(line.split(",")[1]) for line in lines[1:]]
    off = [float(line.split(",")[2]) for line in lines[1:]]
    # composing the degradation keeps the restorer stable; skipping it
    # lets repeated sharpening tear the image apart
    assert off[-1] < on[-1]
    assert max(on[1:]) - min(on[1:]) <= 0.5
    assert off[1] - off[-1] > 3.0
    ET.fromstring((out / "fixedpoint.svg").read_text())
    assert "compose-on final" in capsys.readouterr().out


def test_fixedpoint_deterministic(workdir):
    cfg = str(data_path("configs/fixedpoint_wiener.json"))
    a, b = workdir / "a", workdir / "b"
    assert main(["fixedpoint", "--config", cfg, "--out", str(a)]) == 0
    assert main(["fixedpoint", "--config", cfg, "--out", str(b)]) == 0
    assert _read_tree(a) == _read_tree(b)


# ---------------------------------------------------------------- probe


def test_probe_grid_layout_and_ordering(workdir, capsys):
    out = workdir / "out"
    cfg = str(data_path("configs/probe_tv.json"))
    assert main(["probe", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "probe.csv").read_text().strip().split("\n")
    header = lines[0].split(",")
    assert header[0] == "sigma_blur"
    noise_axis = [float(v) for v in header[1:]]
    matrix = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
    blur_axis = [float(line.split(",")[0]) for line in lines[1:]]
    assert matrix.shape == (len(blur_axis), len(noise_axis))
    # noise dominates the loss: the grid minimum sits in the noiseless
    # column, the maximum in the noisiest one
    assert matrix[:, 0].min() == matrix.min()
    assert matrix[:, -1].max() == matrix.max()
    # restoration distance grows along the noise axis in every blur row
    for row in matrix:
        assert all(np.diff(row) > 0)
    # blur pre-smooths the input, making the denoiser settle closer to it
    assert all(np.diff(matrix[:, 0]) < 0)
    ET.fromstring((out / "probe.svg").read_text())
    capsys.readouterr()


def test_probe_custom_grid(workdir):
    out = workdir / "out"
    cfg = _denoise_config(
        workdir,
        probe={"sigma_blur": [0.0, 0.8], "sigma_noise": [0.0, 0.1], "samples": 3},
    )
    assert main(["probe", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "probe.csv").read_text().strip().split("\n")
    assert len(lines) == 3  # header + two blur rows
    assert lines[0] == "sigma_blur,0,0.1"


# ---------------------------------------------------------------- bench


def _bench_config(workdir):
    imgs = workdir / "imgs"
    return _write_config(
        workdir,
        {
            "inputs": [str(imgs / "alpha.png")],
            "problem": {"operator": "identity", "noise_sigma": 0.05},
            "priors": [
                {
                    "restorer": "tv",
                    "params": {"strength": 0.08},
                    "gamma": 0.4,
                    "spec": {"family": "additive_noise", "sigma": [0.01, 0.05]},
                },
                {
                    "restorer": "dct",
                    "params": {"threshold": 0.02},
                    "gamma": 0.4,
                    "spec": {"family": "additive_noise", "sigma": [0.01, 0.05]},
                },
            ],
            "solver": {"lam": 1.0, "iters": 4, "seed": 5},
            "bench": {"methods": ["fire", "pnp_hqs", "red"]},
        },
        name="bench.json",
    )


def test_bench_table_layout(workdir, capsys):
    out = workdir / "out"
    assert main(["bench", "--config", _bench_config(workdir), "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().strip().split("\n")
    assert lines[0] == "config,fire,pnp_hqs,red"
    names = [line.split(",")[0] for line in lines[1:]]
    assert names == ["1:tv", "2:dct", "ensemble"]
    for line in lines[1:3]:
        cells = line.split(",")[1:]
        assert len(cells) == 3 and all(float(c) > 0 for c in cells)
    ensemble = lines[3].split(",")
    assert float(ensemble[1]) > 0  # fire column filled
    assert ensemble[2] == "" and ensemble[3] == ""  # one-prior baselines have no ensemble
    assert "benchmarked" in capsys.readouterr().out


def test_bench_rerun_and_threads_byte_identical(workdir):
    cfg = _bench_config(workdir)
    a, b, t4 = workdir / "a", workdir / "b", workdir / "t4"
    assert main(["bench", "--config", cfg, "--out", str(a)]) == 0
    assert main(["bench", "--config", cfg, "--out", str(b)]) == 0
    assert main(["bench", "--config", cfg, "--out", str(t4), "--threads", "4"]) == 0
    assert (a / "bench.csv").read_bytes() == (b / "bench.csv").read_bytes()
    assert (a / "bench.csv").read_bytes() == (t4 / "bench.csv").read_bytes()


def test_bench_method_subset(workdir):
    out = workdir / "out"
    cfg_path = Path(_bench_config(workdir))
    body = json.loads(cfg_path.read_text())
    body["bench"]["methods"] = ["fire"]
    cfg_path.write_text(json.dumps(body))
    assert main(["bench", "--config", str(cfg_path), "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().strip().split("\n")
    assert lines[0] == "config,fire"
    assert all(len(line.split(",")) == 2 for line in lines[1:])


# ---------------------------------------------------------------- serve-check


def test_serve_check_round_trip(capsys):
    address = f"cmd:{sys.executable} -c {shlex.quote(_ECHO_SERVER)}"
    assert main(["serve-check", "--address", address, "--timeout-ms", "10000"]) == 0
    out = capsys.readouterr().out
    assert "server ok" in out and "family=echo" in out and "8x8" in out


def test_serve_check_address_from_config(tmp_path, capsys):
    address = f"cmd:{sys.executable} -c {shlex.quote(_ECHO_SERVER)}"
    cfg = _write_config(tmp_path, {"address": address})
    assert main(["serve-check", "--config", cfg, "--timeout-ms", "10000"]) == 0
    assert "server ok" in capsys.readouterr().out


def test_module_entry_points_run_the_cli():
    import subprocess

    for module in ("firekit", "firekit.cli"):
        done = subprocess.run(
            [sys.executable, "-m", module, "serve-check"],
            capture_output=True,
        )
        assert done.returncode == 2
        assert b"config error" in done.stderr


def test_serve_check_timeout_is_a_solver_error(capsys):
    silent = f"cmd:{sys.executable} -c {shlex.quote('import time; time.sleep(30)')}"
    rc = main(["serve-check", "--address", silent, "--timeout-ms", "200"])
    assert rc == 3
    assert "solver error" in capsys.readouterr().err
