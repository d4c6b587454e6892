"""Command-line front end: JSON configs in, images/CSVs/SVGs out.

Subcommands: restore (degrade + solve + metrics), fixedpoint (restorer
iteration traces), probe (degradation-strength grid), bench (methods
comparison table), serve-check (ping a remote restorer).  Exit codes:
0 success, 2 configuration problem, 3 solver or protocol failure.

Every CSV the CLI writes is byte-reproducible for a fixed config and
seed, so wall-clock columns are deliberately left out of trace exports.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .data import data_path
from .datafit import ConvergenceError, DataFit
from .degradations import Degradation, DegradationSpec
from .diagnostics import ProbeGrid, fixed_point_trace, prior_loss_probe
from .engine import (
    DivergenceError,
    SolverConfig,
    StepSchedule,
    conditioned_prior,
    default_init,
    fire_hqs,
    pnp_hqs_step,
    pseudo_inverse,
    red_step,
)
from .fileio import load_kernel, load_mask, read_image, write_image
from .image import Image, Rng, psnr, ssim
from .operators import Convolution, Decimation, Identity, Mask, default_kernel_size, gaussian_kernel
from .plotting import heatmap, line_chart
from .remote import RemoteError, RemoteHandle, remote_restore
from .restorers import PriorTerm, make_restorer

__all__ = ["main", "ConfigError"]

log = logging.getLogger("fire")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if cfg.get("schema") != 1:
        raise ConfigError(f"unsupported config schema: {cfg.get('schema')!r}")
    cfg["_dir"] = p.parent
    return cfg


def _resolve(path: str, base: Path) -> Path:
    """Paths may be absolute, config-relative, or "data:<name>" for bundled files."""
    if path.startswith("data:"):
        return data_path(path[len("data:"):])
    p = Path(path)
    return p if p.is_absolute() else base / p


def _resolve_inputs(cfg: dict) -> list:
    raw = cfg.get("inputs")
    if raw is None:
        raise ConfigError("config is missing 'inputs'")
    if isinstance(raw, str):
        raw = [raw]
    paths = []
    for entry in raw:
        p = _resolve(entry, cfg["_dir"])
        if p.is_dir():
            found = sorted(
                q for q in p.iterdir() if q.suffix.lower() in (".png", ".pgm", ".ppm")
            )
            if not found:
                raise ConfigError(f"input directory holds no images: {p}")
            paths.extend(found)
        elif p.is_file():
            paths.append(p)
        else:
            raise ConfigError(f"input not found: {p}")
    return paths


def _out_dir(cfg: dict, override: str | None) -> Path:
    out = Path(override) if override else Path(cfg.get("outputs", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _as_range(value) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"ranges need exactly [lo, hi], got {value}")
        return (float(value[0]), float(value[1]))
    return (float(value), float(value))


def build_spec(obj: dict, shape: tuple, base: Path) -> DegradationSpec:
    family = obj.get("family")
    sigma = _as_range(obj.get("sigma", 0.0))
    try:
        if family == "additive_noise":
            return DegradationSpec.additive_noise(sigma)
        if family == "blur":
            if "kernel_file" in obj:
                raw = obj.get("sigma", 0.0)
                if isinstance(raw, (list, tuple)):
                    raise ConfigError("blur with kernel_file takes a scalar sigma")
                kernel = load_kernel(str(_resolve(obj["kernel_file"], base)))
                return DegradationSpec.fixed(Convolution(kernel), float(raw))
            return DegradationSpec.blur(
                _as_range(obj.get("blur_sigma", 1.5)), sigma, obj.get("kernel_size")
            )
        if family == "decimation":
            return DegradationSpec.decimation(int(obj.get("factor", 2)), sigma)
        if family == "mask":
            if "mask_file" in obj:
                return DegradationSpec.mask(
                    map=load_mask(str(_resolve(obj["mask_file"], base))), sigma=sigma
                )
            return DegradationSpec.mask(
                drop=_as_range(obj.get("drop", 0.3)), shape=shape, sigma=sigma
            )
        if family in ("jpeg", "jpeg_surrogate"):
            return DegradationSpec.jpeg(_as_range(obj.get("quality", (20, 100))), sigma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown degradation family: {family!r}")


def build_operator(problem: dict, shape: tuple, rng: Rng, base: Path):
    """Returns (A, noise_sigma) for one image's measurement model."""
    kind = problem.get("operator", "identity")
    noise = float(problem.get("noise_sigma", 0.0))
    if kind == "identity":
        return Identity(), noise
    if kind == "blur":
        if "kernel_file" in problem:
            kernel = load_kernel(str(_resolve(problem["kernel_file"], base)))
        else:
            sigma = float(problem.get("blur_sigma", 1.5))
            size = problem.get("kernel_size") or default_kernel_size(sigma)
            kernel = gaussian_kernel(sigma, size)
        return Convolution(kernel), noise
    if kind == "mask":
        if "mask_file" in problem:
            observed = load_mask(str(_resolve(problem["mask_file"], base)))
        else:
            drop = float(problem.get("drop", 0.3))
            if not 0.0 <= drop <= 1.0:
                raise ConfigError(f"drop must be in [0, 1], got {drop}")
            observed = rng.split("mask").uniform(0.0, 1.0, shape) >= drop
        return Mask(observed), noise
    if kind == "decimation":
        return Decimation(int(problem.get("factor", 2))), noise
    raise ConfigError(f"unknown operator: {kind!r}")


def build_priors(cfg: dict, A, shape: tuple) -> list:
    priors = []
    for n, obj in enumerate(cfg.get("priors", [])):
        token = obj.get("restorer")
        if not token:
            raise ConfigError(f"prior {n} is missing 'restorer'")
        try:
            restorer = make_restorer(token, **obj.get("params", {}))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"prior {n}: {exc}") from None
        gamma = float(obj.get("gamma", 0.0))
        try:
            if obj.get("conditioned"):
                priors.append(conditioned_prior(A, restorer, gamma))
            else:
                spec_obj = obj.get("spec")
                if spec_obj is None:
                    raise ConfigError(f"prior {n} needs 'spec' or 'conditioned': true")
                spec = build_spec(spec_obj, shape, cfg["_dir"])
                priors.append(PriorTerm(restorer, spec, gamma))
        except ValueError as exc:
            raise ConfigError(f"prior {n}: {exc}") from None
    return priors


def build_solver(cfg: dict, priors, args) -> SolverConfig:
    obj = dict(cfg.get("solver", {}))
    sched = obj.get("schedule", {"kind": "constant"})
    try:
        if sched.get("kind", "constant") == "constant":
            schedule = StepSchedule.constant(float(sched.get("scale", 1.0)))
        elif sched["kind"] == "polynomial":
            schedule = StepSchedule.polynomial(
                float(sched.get("scale", 1.0)), float(sched.get("exponent", 0.75))
            )
        else:
            raise ConfigError(f"unknown schedule kind: {sched.get('kind')!r}")
        return SolverConfig(
            priors=tuple(priors),
            lam=float(obj.get("lam", 0.0)),
            iters=int(obj.get("iters", 30)),
            mode=obj.get("mode", "stochastic"),
            schedule=schedule,
            return_u=obj.get("return_u"),
            parallel_priors=args.threads > 1,
            threads=args.threads,
            seed=int(args.seed if args.seed is not None else obj.get("seed", 0)),
            stop_increment=obj.get("stop_increment"),
            track_f=int(obj.get("track_f", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _degrade(x: Image, A, noise_sigma: float, rng: Rng) -> Image:
    y = A.forward(x)
    if noise_sigma > 0:
        y = Image(y.data + rng.split("measure").normal(y.shape, noise_sigma))
    return y


# ---------------------------------------------------------------------------
# subcommands


def cmd_restore(cfg: dict, args) -> int:
    inputs = _resolve_inputs(cfg)
    out = _out_dir(cfg, args.out)
    problem = cfg.get("problem", {})
    seed = int(args.seed if args.seed is not None else cfg.get("solver", {}).get("seed", 0))
    root = Rng(seed)

    def run_one(path: Path):
        x = read_image(str(path))
        rng = root.split(f"img/{path.stem}")
        A, noise = build_operator(problem, (x.height, x.width), rng, cfg["_dir"])
        y = _degrade(x, A, noise, rng)
        priors = build_priors(cfg, A, (x.height, x.width))
        solver = build_solver(cfg, priors, args)
        pinv = pseudo_inverse(y, A).clip()
        final, trace = fire_hqs(y, A, solver, reference=x)
        final = final.clip()
        write_image(out / f"{path.stem}_degraded.png", y.clip())
        write_image(out / f"{path.stem}_pinv.png", pinv)
        write_image(out / f"{path.stem}_restored.png", final)
        (out / f"{path.stem}_trace.csv").write_text(trace.to_csv(include_ms=False))
        row = (
            path.stem,
            psnr(final, x),
            ssim(final, x),
            psnr(pinv, x),
            ssim(pinv, x),
        )
        log.info("restored %s: %.2f dB", path.stem, row[1])
        return row

    if args.threads > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(run_one, inputs))
    else:
        rows = [run_one(p) for p in inputs]
    rows.sort(key=lambda r: r[0])
    lines = ["image,psnr,ssim,psnr_pinv,ssim_pinv"]
    lines += [f"{r[0]},{r[1]:.6f},{r[2]:.6f},{r[3]:.6f},{r[4]:.6f}" for r in rows]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    mean_psnr = sum(r[1] for r in rows) / len(rows)
    mean_ssim = sum(r[2] for r in rows) / len(rows)
    print(f"restored {len(rows)} image(s): mean PSNR {mean_psnr:.2f} dB, mean SSIM {mean_ssim:.4f}")
    return 0


def cmd_fixedpoint(cfg: dict, args) -> int:
    inputs = _resolve_inputs(cfg)
    out = _out_dir(cfg, args.out)
    x = read_image(str(inputs[0]))
    priors = build_priors(cfg, Identity(), (x.height, x.width))
    if not priors:
        raise ConfigError("fixedpoint needs at least one prior")
    term = priors[0]
    iters = int(cfg.get("solver", {}).get("iters", 20))
    seed = int(args.seed if args.seed is not None else cfg.get("solver", {}).get("seed", 0))
    on = fixed_point_trace(x, term, iters, True, Rng(seed).split("on"))
    off = fixed_point_trace(x, term, iters, False, Rng(seed).split("off"))
    lines = ["iter,compose_on,compose_off"]
    lines += [f"{k},{a:.17g},{b:.17g}" for k, (a, b) in enumerate(zip(on, off))]
    (out / "fixedpoint.csv").write_text("\n".join(lines) + "\n")
    svg = line_chart(
        [("compose on", on), ("compose off", off)],
        title="Restorer iteration stability",
        xlabel="iteration",
        ylabel="PSNR vs start (dB)",
    )
    (out / "fixedpoint.svg").write_text(svg)
    print(
        f"fixed-point trace over {iters} iterations: "
        f"compose-on final {on[-1]:.2f} dB, compose-off final {off[-1]:.2f} dB"
    )
    return 0


def cmd_probe(cfg: dict, args) -> int:
    inputs = _resolve_inputs(cfg)
    out = _out_dir(cfg, args.out)
    x = read_image(str(inputs[0]))
    priors = build_priors(cfg, Identity(), (x.height, x.width))
    if not priors:
        raise ConfigError("probe needs at least one prior")
    obj = cfg.get("probe", {})
    try:
        grid = ProbeGrid(
            tuple(obj.get("sigma_blur", (0.0,))),
            tuple(obj.get("sigma_noise", (0.0,))),
            int(obj.get("samples", 8)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seed = int(args.seed if args.seed is not None else cfg.get("solver", {}).get("seed", 0))
    matrix = prior_loss_probe(x, priors[0], grid, Rng(seed))
    header = "sigma_blur" + "".join(f",{v:g}" for v in grid.sigma_noise)
    lines = [header]
    for i, sb in enumerate(grid.sigma_blur):
        lines.append(f"{sb:g}" + "".join(f",{v:.17g}" for v in matrix[i]))
    (out / "probe.csv").write_text("\n".join(lines) + "\n")
    svg = heatmap(
        matrix,
        [f"{v:g}" for v in grid.sigma_blur],
        [f"{v:g}" for v in grid.sigma_noise],
        title="Mean restoration distance",
    )
    (out / "probe.svg").write_text(svg)
    print(f"probed {matrix.shape[0]}x{matrix.shape[1]} grid; min {matrix.min():.4f} max {matrix.max():.4f}")
    return 0


def cmd_bench(cfg: dict, args) -> int:
    inputs = _resolve_inputs(cfg)
    out = _out_dir(cfg, args.out)
    problem = cfg.get("problem", {})
    methods = cfg.get("bench", {}).get("methods", ["fire", "pnp_hqs", "red"])
    seed = int(args.seed if args.seed is not None else cfg.get("solver", {}).get("seed", 0))
    root = Rng(seed)

    prior_names = [
        f"{n + 1}:{obj.get('restorer')}" for n, obj in enumerate(cfg.get("priors", []))
    ]
    rows = {name: {} for name in prior_names}
    if len(prior_names) > 1:
        rows["ensemble"] = {}

    def accumulate(row: str, method: str, value: float):
        rows[row].setdefault(method, []).append(value)

    for path in inputs:
        x = read_image(str(path))
        rng = root.split(f"img/{path.stem}")
        A, noise = build_operator(problem, (x.height, x.width), rng, cfg["_dir"])
        y = _degrade(x, A, noise, rng)
        priors = build_priors(cfg, A, (x.height, x.width))
        solver = build_solver(cfg, priors, args)
        x0 = default_init(y, A)
        df = DataFit(A, y, solver.lam)

        for n, term in enumerate(priors):
            name = prior_names[n]
            # Restorers conditioned on the measurement operator get it as
            # side information in the one-step baselines too.
            side = Degradation(A, 0.0) if term.spec.family == "fixed" else None
            if "fire" in methods:
                single = SolverConfig(
                    priors=(term,),
                    lam=solver.lam,
                    iters=solver.iters,
                    mode=solver.mode,
                    schedule=solver.schedule,
                    return_u=solver.return_u,
                    parallel_priors=solver.parallel_priors,
                    threads=solver.threads,
                    seed=solver.seed,
                )
                final, _ = fire_hqs(y, A, single, x0=x0)
                accumulate(name, "fire", psnr(final.clip(), x))
            if "pnp_hqs" in methods:
                xk = x0
                for _ in range(solver.iters):
                    xk = pnp_hqs_step(xk, df, term.restorer, side)
                accumulate(name, "pnp_hqs", psnr(xk.clip(), x))
            if "red" in methods:
                xk = x0
                for _ in range(solver.iters):
                    xk = red_step(
                        xk, df, term.restorer, term.gamma, use_residual=True, degradation=side
                    )
                accumulate(name, "red", psnr(xk.clip(), x))
        if "ensemble" in rows and "fire" in methods:
            final, _ = fire_hqs(y, A, solver, x0=x0)
            accumulate("ensemble", "fire", psnr(final.clip(), x))

    lines = ["config," + ",".join(methods)]
    for name, cells in rows.items():
        row = [name]
        for method in methods:
            vals = cells.get(method)
            row.append(f"{sum(vals) / len(vals):.6f}" if vals else "")
        lines.append(",".join(row))
    (out / "bench.csv").write_text("\n".join(lines) + "\n")
    print(f"benchmarked {len(rows)} configuration(s) x {len(methods)} method(s) "
          f"on {len(inputs)} image(s); table in {out / 'bench.csv'}")
    return 0


def _serve_check(address: str, timeout_ms: int) -> int:
    if address.startswith("cmd:"):
        handle = RemoteHandle.from_command(address[len("cmd:"):], timeout_ms)
    else:
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"malformed remote address: {address!r}")
        handle = RemoteHandle.from_tcp(host, int(port), timeout_ms)
    with handle:
        caps = handle.handshake()
        ramp = np.linspace(0.0, 1.0, 64, dtype=np.float64).reshape(8, 8, 1)
        result = remote_restore(handle, Image(ramp))
    print(
        f"server ok: family={caps.family} shape_policy={caps.shape_policy}; "
        f"8x8 round trip returned {result.height}x{result.width}x{result.channels}"
    )
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fire", description="fixed-point restoration workflows"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("restore", True),
        ("fixedpoint", True),
        ("probe", True),
        ("bench", True),
        ("serve-check", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        if name == "serve-check":
            p.add_argument("--address", default=None)
            p.add_argument("--timeout-ms", type=int, default=5000)
    return parser


def main(argv=None) -> int:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("FIRE_LOG", "").lower(), logging.WARNING
    )
    logging.basicConfig(level=level, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve-check":
            address = args.address
            if not address and args.config:
                address = load_config(args.config).get("address")
            if not address:
                raise ConfigError("serve-check needs --address or an 'address' config entry")
            return _serve_check(address, args.timeout_ms)
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        handler = {
            "restore": cmd_restore,
            "fixedpoint": cmd_fixedpoint,
            "probe": cmd_probe,
            "bench": cmd_bench,
        }[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, ConvergenceError, RemoteError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
