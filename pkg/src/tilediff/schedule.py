"""Diffusion time grid: scale factors a_t, noise levels sigma_t, the forward
process, and the re-noising jumps used by time-travel resampling.

The numeric grid is a linear-beta schedule, beta from 1e-4 to 0.02 over 1000
reference steps, rescaled by 1000/T so any T spans the same cumulative noise
range. Variance preserving throughout: a_t^2 + sigma_t^2 = 1.
"""

from __future__ import annotations

import dataclasses

import numpy as np

BETA_START = 1e-4
BETA_END = 0.02
REFERENCE_STEPS = 1000
BETA_MAX = 0.999


@dataclasses.dataclass(frozen=True)
class Schedule:
    """a and sigma arrays indexed t = 0..T; a_0 = 1, sigma_0 = 0."""

    T: int
    a: np.ndarray
    sigma: np.ndarray

    def validate(self):
        if self.a.shape != (self.T + 1,) or self.sigma.shape != (self.T + 1,):
            raise ValueError("schedule arrays must have length T + 1")
        if self.a[0] != 1.0 or self.sigma[0] != 0.0:
            raise ValueError("schedule must start at a_0 = 1, sigma_0 = 0")
        if not np.all(np.diff(self.a) < 0):
            raise ValueError("a must be strictly decreasing")
        if not np.all(np.diff(self.sigma) > 0):
            raise ValueError("sigma must be strictly increasing")
        if np.max(np.abs(self.a**2 + self.sigma**2 - 1.0)) > 1e-12:
            raise ValueError("schedule is not variance preserving")


@dataclasses.dataclass(frozen=True)
class TravelPlan:
    """Time-travel block structure: block length l, traversals per block r."""

    l: int = 1
    r: int = 1

    def __post_init__(self):
        if self.l < 1 or self.r < 1:
            raise ValueError(f"travel plan needs l >= 1 and r >= 1, got {self}")


def build_schedule(T: int) -> Schedule:
    """Linear-beta schedule over T steps; a_T <= 0.05 (near pure noise)."""
    if T < 1:
        raise ValueError(f"step count must be >= 1, got {T}")
    scale = REFERENCE_STEPS / T
    betas = np.linspace(BETA_START * scale, BETA_END * scale, T)
    betas = np.clip(betas, 0.0, BETA_MAX)
    abar = np.cumprod(1.0 - betas)
    a = np.concatenate([[1.0], np.sqrt(abar)])
    sigma = np.sqrt(1.0 - a**2)
    sched = Schedule(T=T, a=a, sigma=sigma)
    sched.validate()
    return sched


def forward_diffuse(x0: np.ndarray, t: int, noise: np.ndarray,
                    sched: Schedule) -> np.ndarray:
    """x_t = a_t x_0 + sigma_t eps for standard-normal eps."""
    if not 0 <= t <= sched.T:
        raise ValueError(f"t = {t} out of range 0..{sched.T}")
    return sched.a[t] * x0 + sched.sigma[t] * noise


def renoise_jump(x_t: np.ndarray, t: int, l: int, noise: np.ndarray,
                 sched: Schedule) -> np.ndarray:
    """Re-noise x_t forward by l steps preserving the marginal of x_{t+l}.

    Returns (a_{t+l}/a_t) x_t + sqrt(sigma_{t+l}^2 - (a_{t+l}/a_t)^2
    sigma_t^2) eps. The value under the root is non-negative for any
    variance-preserving schedule.
    """
    if l < 0 or t + l > sched.T:
        raise ValueError(f"jump t={t}, l={l} leaves the grid 0..{sched.T}")
    ratio = sched.a[t + l] / sched.a[t]
    var = sched.sigma[t + l] ** 2 - ratio**2 * sched.sigma[t] ** 2
    assert var > -1e-12, f"negative jump variance {var} at t={t}, l={l}"
    return ratio * x_t + np.sqrt(max(var, 0.0)) * noise


def travel_blocks(T: int, l: int):
    """Partition t = T..1 into consecutive blocks of length l (last may be
    shorter); each block is (t_hi, t_lo) with t_hi >= t_lo >= 1."""
    blocks = []
    t_hi = T
    while t_hi >= 1:
        t_lo = max(t_hi - l + 1, 1)
        blocks.append((t_hi, t_lo))
        t_hi = t_lo - 1
    return blocks
