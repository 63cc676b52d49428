"""Command-line orchestration: job parsing, task construction, metrics.

Subcommands: generate, restore, plan (print the tile plan without running),
selftest (quick invariant checks plus a determinism probe). Options can come
from a `key = value` config file (# comments); command-line flags win.
Every run writes the output image and a metrics.txt with the consistency
error, per-seam statistics, wall clock, and step count.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import os
import sys
import time

import numpy as np

from . import denoise, linops, tasks
from .hir import HirConfig, hir_restore
from .imagecore import Image, load_image, save_image
from .msr import TilePlan, msr_restore, plan_tiles
from .sampler import SamplerConfig
from .schedule import TravelPlan, build_schedule

TASK_NAMES = ("sr", "inpaint", "colorize", "denoise", "generate")

_DEFAULTS = dict(
    task=None, scale=None, mask=None, sigma_y=0.0, width=None, height=None,
    patch=64, overlap=32, steps=100, eta=0.85, travel_l=10, travel_r=3,
    hir_factor=0, seed=0, prior=None, input=None, output=None, naive=False,
)

_TYPES = dict(
    task=str, scale=int, mask=str, sigma_y=float, width=int, height=int,
    patch=int, overlap=int, steps=int, eta=float, travel_l=int, travel_r=int,
    hir_factor=int, seed=int, prior=str, input=str, output=str, naive=bool,
)


class JobError(ValueError):
    """Invalid or inconsistent job specification."""


@dataclasses.dataclass
class JobSpec:
    task: str | None = None
    scale: int | None = None
    mask: str | None = None
    sigma_y: float = 0.0
    width: int | None = None
    height: int | None = None
    patch: int = 64
    overlap: int = 32
    steps: int = 100
    eta: float = 0.85
    travel_l: int = 10
    travel_r: int = 3
    hir_factor: int = 0
    seed: int = 0
    prior: str | None = None
    input: str | None = None
    output: str | None = None
    naive: bool = False


def _read_config(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise JobError(f"{path}:{lineno}: expected `key = value`")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            val = val.strip()
            if key not in _DEFAULTS:
                raise JobError(f"{path}:{lineno}: unknown key {key!r}")
            typ = _TYPES[key]
            try:
                if typ is bool:
                    values[key] = val.lower() in ("1", "true", "yes", "on")
                else:
                    values[key] = typ(val)
            except ValueError:
                raise JobError(
                    f"{path}:{lineno}: bad {typ.__name__} value {val!r} "
                    f"for {key}") from None
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilediff",
        description="Tiled diffusion restoration and generation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value option file")
        p.add_argument("--patch", type=int)
        p.add_argument("--overlap", type=int)
        p.add_argument("--steps", type=int, help="diffusion steps T")
        p.add_argument("--eta", type=float)
        p.add_argument("--travel-l", type=int, dest="travel_l")
        p.add_argument("--travel-r", type=int, dest="travel_r")
        p.add_argument("--hir-factor", type=int, dest="hir_factor",
                       help="coarse-phase downsample factor, 0 = off")
        p.add_argument("--seed", type=int)
        p.add_argument("--sigma-y", type=float, dest="sigma_y")
        p.add_argument("--prior", help="prior directory with prior.txt")
        p.add_argument("--out", dest="output")
        p.add_argument("--naive", action="store_const", const=True,
                       help="solve tiles independently (no overlap "
                            "constraint); baseline for comparison")

    p_restore = sub.add_parser("restore", help="solve an inverse problem")
    p_restore.add_argument("--task", choices=[t for t in TASK_NAMES
                                              if t != "generate"])
    p_restore.add_argument("--scale", type=int, help="SR factor")
    p_restore.add_argument("--mask", help="PGM mask, 0=missing 255=known")
    p_restore.add_argument("--in", dest="input")
    add_common(p_restore)

    p_gen = sub.add_parser("generate", help="sample an image from the prior")
    p_gen.add_argument("--width", type=int)
    p_gen.add_argument("--height", type=int)
    add_common(p_gen)

    p_plan = sub.add_parser("plan", help="print the tile plan and exit")
    p_plan.add_argument("--width", type=int, required=True)
    p_plan.add_argument("--height", type=int, required=True)
    p_plan.add_argument("--patch", type=int, default=64)
    p_plan.add_argument("--overlap", type=int, default=32)
    p_plan.add_argument("--block", type=int, default=1)

    sub.add_parser("selftest", help="run built-in invariant checks")
    return parser


def parse_job(argv) -> tuple[str, JobSpec | argparse.Namespace]:
    """Parse argv into (command, JobSpec); flags override config values."""
    args = _build_parser().parse_args(argv)
    if args.command in ("plan", "selftest"):
        return args.command, args
    values = dict(_DEFAULTS)
    if args.config:
        values.update(_read_config(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.command == "generate":
        values["task"] = "generate"
    job = JobSpec(**values)
    validate_job(job)
    return args.command, job


def validate_job(job: JobSpec):
    if job.task not in TASK_NAMES:
        raise JobError(f"task must be one of {TASK_NAMES}, got {job.task!r}")
    if job.prior is None:
        raise JobError("missing required option: prior")
    if job.output is None:
        raise JobError("missing required option: out")
    if job.task == "generate":
        if job.width is None or job.height is None:
            raise JobError("generate requires width and height")
    else:
        if job.input is None:
            raise JobError(f"task {job.task} requires an input image")
    if job.task == "sr" and not job.scale:
        raise JobError("sr requires scale")
    if job.task == "inpaint" and not job.mask:
        raise JobError("inpaint requires mask")
    if not 0 < job.overlap < job.patch:
        raise JobError(
            f"need 0 < overlap < patch, got {job.overlap}/{job.patch}")
    block = _job_block(job)
    if job.patch % block or job.overlap % block:
        raise JobError(
            f"patch {job.patch} and overlap {job.overlap} must be "
            f"multiples of {block} (operator block x hierarchy factor)")
    if job.hir_factor == 1:
        raise JobError("hir-factor must be 0 (off) or >= 2")
    if job.steps < 1:
        raise JobError("steps must be >= 1")


def _job_block(job: JobSpec) -> int:
    block = job.scale if job.task == "sr" else 1
    if job.hir_factor >= 2:
        block = math.lcm(block, job.hir_factor)
    return block


def _build_task(job: JobSpec) -> tasks.Task:
    if job.task == "generate":
        return tasks.GenerateTask(job.height, job.width, 3)
    img = load_image(job.input)
    if job.task == "sr":
        return tasks.SuperResolutionTask(img.data, job.scale)
    if job.task == "inpaint":
        known = linops.load_mask(job.mask)
        return tasks.InpaintTask(img.data, known)
    if job.task == "colorize":
        return tasks.ColorizeTask(img.data)
    if job.task == "denoise":
        return tasks.DenoiseTask(img.data)
    raise JobError(f"unhandled task {job.task}")


def seam_metric(img: np.ndarray, plan: TilePlan):
    """Per-seam excess of the boundary first-difference over interior
    texture. For each internal tile boundary line: max |first difference|
    across the line, minus the median |first difference| in a 5-pixel
    interior band next to it; clamped at 0. Returns a list of
    (axis, position, value).
    """
    results = []
    xs = sorted({w.left for w in plan.windows})
    ys = sorted({w.top for w in plan.windows})

    def seam_lines(starts, extent):
        lines = set()
        for i in range(1, len(starts)):
            lines.add(starts[i])
            prev_end = starts[i - 1] + plan.patch
            if prev_end < extent:
                lines.add(prev_end)
        return sorted(lines)

    def evaluate(diffs, c, extent):
        # diffs[k] = |line k+1 - line k|; seam difference is diffs[c-1]
        d_seam = diffs[c - 1].max()
        lo = c + 1
        hi = min(lo + 5, extent - 1)
        if hi - lo < 5:
            hi = c - 2
            lo = max(hi - 5, 0)
        band = diffs[lo:hi]
        med = float(np.median(band)) if band.size else 0.0
        return max(float(d_seam) - med, 0.0)

    col_diffs = np.abs(np.diff(img, axis=1))
    for c in seam_lines(xs, plan.width):
        results.append(("col", c, evaluate(col_diffs.swapaxes(0, 1), c,
                                           plan.width)))
    row_diffs = np.abs(np.diff(img, axis=0))
    for r in seam_lines(ys, plan.height):
        results.append(("row", r, evaluate(row_diffs, r, plan.height)))
    return results


def run_job(job: JobSpec) -> int:
    """Execute a validated job; write the output image and metrics.txt."""
    start = time.monotonic()
    metrics: dict[str, object] = {}
    out_dir = os.path.dirname(os.path.abspath(job.output))
    os.makedirs(out_dir, exist_ok=True)
    status = 0
    try:
        denoiser = denoise.load_gmm_prior(job.prior)
        ph, pw = denoiser.input_shape[:2]
        if (ph, pw) != (job.patch, job.patch):
            raise JobError(
                f"prior images are {ph}x{pw} but patch is {job.patch}")
        task = _build_task(job)
        block = _job_block(job)
        plan = plan_tiles(task.shape[0], task.shape[1], job.patch,
                          job.overlap, block=block)
        cfg = SamplerConfig(T=job.steps, eta=job.eta,
                            travel=TravelPlan(job.travel_l, job.travel_r),
                            seed=job.seed, sigma_y=job.sigma_y)
        steps = [0]
        dump_dir = os.environ.get("TILEDIFF_DEBUG_DIR") or None
        if job.hir_factor >= 2:
            hir = HirConfig(factor=job.hir_factor, phase1=cfg, phase2=cfg)
            result = hir_restore(task, hir, plan, denoiser,
                                 on_step=lambda t: steps.__setitem__(
                                     0, steps[0] + 1))
            img = result.image
            metrics["lowfreq_residual"] = result.lowfreq_residual
        else:
            img = msr_restore(task, plan, denoiser, cfg,
                              use_mask_hook=not job.naive,
                              on_step=lambda t: steps.__setitem__(
                                  0, steps[0] + 1),
                              dump_dir=dump_dir)
        full = task.full_problem()
        if full is not None:
            op, y = full
            metrics["consistency"] = float(np.abs(op.forward(img) - y).max())
        else:
            metrics["consistency"] = 0.0
        seams = seam_metric(img, plan)
        metrics["seam_max"] = max((v for _, _, v in seams), default=0.0)
        for axis, pos, v in seams:
            metrics[f"seam_{axis}_{pos}"] = v
        metrics["steps"] = steps[0]
        save_image(job.output, Image(img))
        print(f"wrote {job.output}")
    except (JobError, ValueError, OSError) as e:
        metrics["error"] = str(e)
        print(f"error: {e}", file=sys.stderr)
        status = 1
    metrics["wall_clock_sec"] = time.monotonic() - start
    metrics_path = os.path.join(out_dir, "metrics.txt")
    with open(metrics_path, "w", encoding="utf-8") as f:
        for key, val in metrics.items():
            f.write(f"{key}: {val}\n")
    return status


def run_plan(args) -> int:
    plan = plan_tiles(args.height, args.width, args.patch, args.overlap,
                      block=args.block)
    print(f"{plan.rows} x {plan.cols} tiles, patch {plan.patch}, "
          f"overlap {plan.overlap}, stride {plan.stride}")
    for idx, win in enumerate(plan.windows):
        row, col = plan.grid_index(idx)
        print(f"tile {idx} (row {row}, col {col}): "
              f"top={win.top} left={win.left} "
              f"{win.height}x{win.width}")
    return 0


def run_selftest() -> int:
    """Quick invariant checks plus a fixed-seed determinism probe."""
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}: {name}")
        if not ok:
            failures += 1

    rng = np.random.default_rng(1234)
    ops = [linops.op_avgpool((8, 8, 3), 2),
           linops.op_mask(rng.random((8, 8, 3)) < 0.5),
           linops.op_gray((8, 8, 3)),
           linops.op_identity((8, 8, 3))]
    worst = 0.0
    for op in ops:
        for _ in range(20):
            x = rng.standard_normal(op.input_shape)
            ax = op.forward(x)
            worst = max(worst, float(np.abs(
                op.forward(op.pinv(ax)) - ax).max()))
            px = op.range_project(x)
            worst = max(worst, float(np.abs(
                op.range_project(px) - px).max()))
    check(f"operator identities (max err {worst:.2e})", worst <= 1e-10)

    sched = build_schedule(100)
    vp = float(np.abs(sched.a**2 + sched.sigma**2 - 1.0).max())
    check(f"variance-preserving schedule (max err {vp:.2e})", vp <= 1e-12)

    mu = np.zeros((16, 16, 3))
    den = denoise.GaussianDenoiser(mu, 0.25)
    gen = tasks.GenerateTask(16, 24, 3)
    plan = plan_tiles(16, 24, 16, 8)
    cfg = SamplerConfig(T=20, seed=99)
    hashes = set()
    for _ in range(2):
        img = msr_restore(gen, plan, den, cfg)
        hashes.add(hashlib.sha256(img.tobytes()).hexdigest())
    check("fixed-seed determinism (identical output hashes)",
          len(hashes) == 1)

    print(f"selftest: {'OK' if failures == 0 else f'{failures} failure(s)'}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, job = parse_job(argv)
    except JobError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if command == "plan":
        return run_plan(job)
    if command == "selftest":
        return run_selftest()
    return run_job(job)


if __name__ == "__main__":
    sys.exit(main())
