"""Hierarchical restoration: a semantic phase at 1/f size, then a texture
phase at full size whose every step is pinned to the coarse result's low
frequencies via x0tilde = pinv(A_sr) x0coarse + (I - pinv(A_sr) A_sr) x0|t,
with A_sr the f x f average-pooling downsampler.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .imagecore import Window
from .linops import AvgPool
from .msr import TilePlan, msr_restore, plan_tiles
from .sampler import SamplerConfig
from .tasks import Task


@dataclasses.dataclass(frozen=True)
class HirConfig:
    factor: int
    phase1: SamplerConfig
    phase2: SamplerConfig

    def __post_init__(self):
        if self.factor < 2:
            raise ValueError(f"hierarchy factor must be >= 2, got {self.factor}")


@dataclasses.dataclass(frozen=True)
class HirResult:
    image: np.ndarray
    coarse: np.ndarray
    lowfreq_residual: float  # max |A_sr image - coarse|, logged, not bounded


def derive_phase1_task(task: Task, f: int) -> Task:
    """The reduced task solved by the semantic phase."""
    if f < 2:
        raise ValueError(f"hierarchy factor must be >= 2, got {f}")
    h, w, _ = task.shape
    if h % f or w % f:
        raise ValueError(f"result dims {h}x{w} not divisible by factor {f}")
    return task.reduce(f)


def hir_restore(task: Task, hir: HirConfig, plan2: TilePlan, denoiser,
                plan1: TilePlan | None = None,
                hook_trace: list | None = None,
                on_step=None) -> HirResult:
    """Two-phase restoration; returns the full-size image, the coarse
    result, and the final low-frequency residual.

    hook_trace, when given, collects max |A_sr x0tilde - coarse_tile| right
    after the low-frequency hook at every step (should be ~0 by
    construction).
    """
    f = hir.factor
    patch = plan2.patch
    if patch % f:
        raise ValueError(f"patch {patch} must be divisible by factor {f}")
    for win in plan2.windows:
        if win.top % f or win.left % f:
            raise ValueError(f"tile window {win} not aligned to factor {f}")

    reduced = derive_phase1_task(task, f)
    if plan1 is None:
        plan1 = plan_tiles(reduced.shape[0], reduced.shape[1],
                           patch, plan2.overlap, block=reduced.block)
    coarse = msr_restore(reduced, plan1, denoiser, hir.phase1,
                         on_step=on_step)

    c = task.shape[2]
    sr = AvgPool((patch, patch, c), f)

    def hook_factory(win: Window):
        ref = coarse[win.top // f:(win.top + win.height) // f,
                     win.left // f:(win.left + win.width) // f, :]

        def hook(x0t, t):
            out = sr.pinv(ref) + x0t - sr.range_project(x0t)
            if hook_trace is not None:
                hook_trace.append(float(np.abs(sr.forward(out) - ref).max()))
            return out

        return hook

    image = msr_restore(task, plan2, denoiser, hir.phase2,
                        pre_hook_factory=hook_factory, on_step=on_step)
    full_sr = AvgPool(task.shape, f)
    residual = float(np.abs(full_sr.forward(image) - coarse).max())
    return HirResult(image=image, coarse=coarse, lowfreq_residual=residual)
