"""Reverse-diffusion engine with range-null-space projection.

Each step estimates the clean image from the predicted noise, projects it
onto the measurement-consistent affine subspace (x0hat = pinv(A) y +
(I - pinv(A) A) x0t, or the rescaled variant when the measurement is
noisy), and samples the previous state. Constraint hooks run around the
projection so the tiling and coarse-to-fine layers can edit x0|t without
touching the engine.
"""

from __future__ import annotations

import dataclasses
import math
import os
from typing import Callable, Sequence

import numpy as np

from . import imagecore
from .linops import LinearOperator
from .schedule import Schedule, TravelPlan, build_schedule, renoise_jump, travel_blocks


class SamplerError(RuntimeError):
    """Non-finite state or other unrecoverable failure during sampling."""


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    T: int = 100
    eta: float = 0.85
    travel: TravelPlan = TravelPlan(1, 1)
    seed: int = 0
    sigma_y: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.sigma_y < 0.0:
            raise ValueError(f"sigma_y must be >= 0, got {self.sigma_y}")


Hook = Callable[[np.ndarray, int], np.ndarray]


@dataclasses.dataclass(frozen=True)
class ConstraintHooks:
    """x0|t edits applied in order: pre hooks, projection, post hooks."""

    pre: Sequence[Hook] = ()
    post: Sequence[Hook] = ()


def estimate_x0(x_t: np.ndarray, eps_t: np.ndarray, t: int,
                sched: Schedule) -> np.ndarray:
    """Invert the forward process: x0|t = (x_t - sigma_t eps_t) / a_t."""
    if t < 1:
        raise ValueError("x0 estimation requires t >= 1")
    return (x_t - sched.sigma[t] * eps_t) / sched.a[t]


def ddnm_project(op: LinearOperator, y: np.ndarray,
                 x0t: np.ndarray) -> np.ndarray:
    """pinv(A) y + (I - pinv(A) A) x0t; output is measurement-consistent."""
    if y.shape != tuple(op.output_shape):
        raise ValueError(f"measurement shape {y.shape} != {op.output_shape}")
    # grouping keeps mask-style projectors bitwise exact on known pixels
    return op.pinv(y) + (x0t - op.range_project(x0t))


def compute_lambda_gamma(s: float, t: int, sched: Schedule, eta: float,
                         sigma_y: float) -> tuple[float, float]:
    """Per-mode coefficients for the noisy measurement path.

    lambda keeps the range-space update as close to full strength as the
    noise budget allows (clamped so the injected measurement noise never
    exceeds the step's total); gamma is the remaining fresh-noise scale,
    satisfying a_{t-1}^2 sigma_y^2 lambda^2 s^2 + sigma_{t-1}^2 gamma^2
    = sigma_{t-1}^2 eta^2. Null modes (s = 0) carry no measurement noise,
    so gamma = eta there. At sigma_{t-1} = 0 both are defined as 0.
    """
    if s < 0:
        raise ValueError(f"singular value must be >= 0, got {s}")
    if t < 1:
        raise ValueError("coefficients require t >= 1")
    if s == 0.0 or sigma_y == 0.0:
        return 1.0, eta
    sig = sched.sigma[t - 1]
    a = sched.a[t - 1]
    if sig == 0.0:
        return 0.0, 0.0
    if sig * eta >= a * sigma_y * s:
        lam = 1.0
        gam = math.sqrt(max(sig**2 * eta**2 - a**2 * sigma_y**2 * s**2,
                            0.0)) / sig
    else:
        lam = sig * eta / (a * sigma_y * s)
        gam = 0.0
    return lam, gam


def ddnm_plus_project(op: LinearOperator, y: np.ndarray, x0t: np.ndarray,
                      t: int, sched: Schedule,
                      cfg: SamplerConfig) -> tuple[np.ndarray, dict]:
    """Noisy-path projection x0t + pinv_scaled(A, y - A x0t, lambda).

    Also returns the per-mode gamma map {s: gamma} for noise injection.
    With sigma_y = 0 this reduces exactly to ddnm_project and gamma = eta.
    """
    if y.shape != tuple(op.output_shape):
        raise ValueError(f"measurement shape {y.shape} != {op.output_shape}")
    if cfg.sigma_y == 0.0:
        # lambda = 1 on every mode; reduce bit-exactly to the clean path
        return ddnm_project(op, y, x0t), {s: cfg.eta
                                          for s, _ in op.mode_classes}
    residual = y - op.forward(x0t)
    lam_of = lambda s: compute_lambda_gamma(s, t, sched, cfg.eta,
                                            cfg.sigma_y)[0]
    xhat = x0t + op.pinv_scaled(residual, lam_of)
    gammas = {s: compute_lambda_gamma(s, t, sched, cfg.eta, cfg.sigma_y)[1]
              for s, _ in op.mode_classes}
    return xhat, gammas


def sample_prev(x0hat: np.ndarray, eps_t: np.ndarray, t: int,
                sched: Schedule, cfg: SamplerConfig,
                rng: np.random.Generator,
                op: LinearOperator | None = None,
                gammas: dict | None = None) -> np.ndarray:
    """Sample x_{t-1} = a_{t-1} x0hat + sigma_{t-1} (noise mix).

    The noise mix is eta * eps + sqrt(1 - eta^2) * eps_t; on the noisy path
    the fresh eps is rescaled per mode (gamma on range modes, eta on null
    modes) via the range projector.
    """
    if t < 1:
        raise ValueError("sampling requires t >= 1")
    eps = rng.standard_normal(x0hat.shape)
    if gammas is None:
        mix = cfg.eta * eps
    else:
        gamma_range = gammas[op.sing_value]
        gamma_null = gammas.get(0.0, cfg.eta)
        pr = op.range_project(eps)
        mix = gamma_range * pr + gamma_null * (eps - pr)
    mix = mix + math.sqrt(1.0 - cfg.eta**2) * eps_t
    return sched.a[t - 1] * x0hat + sched.sigma[t - 1] * mix


def run_sampler(op: LinearOperator, y: np.ndarray, denoiser,
                cfg: SamplerConfig,
                hooks: ConstraintHooks | None = None,
                sched: Schedule | None = None,
                on_step: Callable[[int], None] | None = None,
                dump_dir: str | None = None,
                dump_every: int = 10) -> np.ndarray:
    """Run the full reverse process and return x_0.

    Per step: predict eps, estimate x0|t, apply pre hooks, project onto
    the measurement subspace (noisy variant when cfg.sigma_y > 0), apply
    post hooks, sample x_{t-1}. Time-travel blocks re-noise the block start
    and re-traverse it cfg.travel.r times.
    """
    hooks = hooks or ConstraintHooks()
    if sched is None:
        sched = build_schedule(cfg.T)
    if denoiser.input_shape is not None and \
            tuple(denoiser.input_shape) != tuple(op.input_shape):
        raise ValueError(
            f"denoiser shape {denoiser.input_shape} != operator input "
            f"{op.input_shape}")
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal(op.input_shape)
    noisy = cfg.sigma_y > 0.0
    for t_hi, t_lo in travel_blocks(cfg.T, cfg.travel.l):
        for rep in range(cfg.travel.r):
            for t in range(t_hi, t_lo - 1, -1):
                eps_t = denoiser.predict_eps(x, t, sched)
                x0t = estimate_x0(x, eps_t, t, sched)
                for h in hooks.pre:
                    x0t = h(x0t, t)
                if noisy:
                    x0hat, gammas = ddnm_plus_project(op, y, x0t, t, sched,
                                                      cfg)
                else:
                    x0hat, gammas = ddnm_project(op, y, x0t), None
                for h in hooks.post:
                    x0hat = h(x0hat, t)
                x = sample_prev(x0hat, eps_t, t, sched, cfg, rng,
                                op=op, gammas=gammas)
                if not np.all(np.isfinite(x)):
                    raise SamplerError(f"non-finite state at step t={t}")
                if on_step is not None:
                    on_step(t)
                if dump_dir is not None and t % dump_every == 0:
                    _dump_snapshot(dump_dir, t, rep, x0hat)
            if rep < cfg.travel.r - 1:
                jump = t_hi - (t_lo - 1)
                noise = rng.standard_normal(x.shape)
                x = renoise_jump(x, t_lo - 1, jump, noise, sched)
    return x


def _dump_snapshot(dump_dir: str, t: int, rep: int, x0hat: np.ndarray):
    os.makedirs(dump_dir, exist_ok=True)
    if x0hat.ndim == 3 and x0hat.shape[2] in (1, 3):
        ext = "pgm" if x0hat.shape[2] == 1 else "ppm"
        path = os.path.join(dump_dir, f"x0_t{t:04d}_r{rep}.{ext}")
        imagecore.save_image(path, imagecore.Image(x0hat))
