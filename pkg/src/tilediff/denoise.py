"""Closed-form noise predictors.

These stand in for a trained denoiser: given x_t = a_t x_0 + sigma_t eps
with x_0 drawn from a Gaussian or Gaussian-mixture prior, the posterior mean
E[x_0 | x_t] is available in closed form, and the predicted noise is
eps_t = (x_t - a_t x0hat) / sigma_t. This makes every downstream stage
exactly verifiable without training.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from . import imagecore
from .schedule import Schedule


def gaussian_posterior_x0(x_t, mu, var, a_t: float, sigma_t: float):
    """Posterior mean of x_0 under the prior N(mu, var I).

    x0hat = mu + a_t var / (a_t^2 var + sigma_t^2) * (x_t - a_t mu).
    """
    if sigma_t <= 0:
        raise ValueError("denoiser requires sigma_t > 0 (never called at t=0)")
    shrink = a_t * var / (a_t**2 * var + sigma_t**2)
    return mu + shrink * (x_t - a_t * mu)


def gmm_posterior_x0(x_t, means, weights, tau: float, a_t: float,
                     sigma_t: float):
    """Posterior mean of x_0 under a mixture of isotropic Gaussians.

    Responsibilities are computed in log space with max-subtraction, so at
    least one component always survives.
    """
    if sigma_t <= 0:
        raise ValueError("denoiser requires sigma_t > 0 (never called at t=0)")
    means = np.asarray(means, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    c = a_t**2 * tau**2 + sigma_t**2
    diffs = x_t[None, ...] - a_t * means
    sq = (diffs**2).reshape(len(weights), -1).sum(axis=1)
    logp = np.log(weights) - sq / (2.0 * c)
    logp -= logp.max()
    rho = np.exp(logp)
    rho /= rho.sum()
    assert np.isfinite(rho).all()
    mbar = np.tensordot(rho, means, axes=1)
    shrink = a_t * tau**2 / c
    return mbar + shrink * (x_t - a_t * mbar)


def eps_from_x0(x_t, x0hat, a_t: float, sigma_t: float):
    return (x_t - a_t * x0hat) / sigma_t


def zero_eps(x_t, t: int | None = None):
    """All-zero noise prediction (test stub); implies x0|t = x_t / a_t."""
    return np.zeros_like(x_t)


class Denoiser:
    """Interface: predict_eps(x_t, t, sched). input_shape None accepts any."""

    input_shape: tuple | None = None

    @property
    def patch_size(self) -> int | None:
        if self.input_shape is None:
            return None
        h, w = self.input_shape[:2]
        return h if h == w else None

    def predict_eps(self, x_t: np.ndarray, t: int,
                    sched: Schedule) -> np.ndarray:
        raise NotImplementedError


class GaussianDenoiser(Denoiser):
    def __init__(self, mu, var):
        self.mu = np.asarray(mu, dtype=np.float64)
        if np.any(np.asarray(var) <= 0):
            raise ValueError("prior variance must be positive")
        self.var = var
        self.input_shape = self.mu.shape

    def posterior_x0(self, x_t, t, sched):
        return gaussian_posterior_x0(x_t, self.mu, self.var,
                                     sched.a[t], sched.sigma[t])

    def predict_eps(self, x_t, t, sched):
        x0 = self.posterior_x0(x_t, t, sched)
        return eps_from_x0(x_t, x0, sched.a[t], sched.sigma[t])


class GmmDenoiser(Denoiser):
    def __init__(self, means, weights, tau: float):
        means = [np.asarray(m, dtype=np.float64) for m in means]
        if not means:
            raise ValueError("mixture needs at least one component")
        shape = means[0].shape
        if any(m.shape != shape for m in means):
            raise ValueError("all component means must share one shape")
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights <= 0):
            raise ValueError("component weights must be positive")
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            weights = weights / total
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.means = np.stack(means)
        self.weights = weights
        self.tau = float(tau)
        self.input_shape = shape

    def posterior_x0(self, x_t, t, sched):
        return gmm_posterior_x0(x_t, self.means, self.weights, self.tau,
                                sched.a[t], sched.sigma[t])

    def predict_eps(self, x_t, t, sched):
        x0 = self.posterior_x0(x_t, t, sched)
        return eps_from_x0(x_t, x0, sched.a[t], sched.sigma[t])


class ZeroDenoiser(Denoiser):
    input_shape = None

    def predict_eps(self, x_t, t, sched):
        return zero_eps(x_t, t)


def load_gmm_prior(directory) -> GmmDenoiser:
    """Load a mixture prior from a directory with a `prior.txt` manifest.

    Manifest format: first line `tau <float>`, then one
    `component <weight> <relative-path>` line per mean image. Weights are
    re-normalized with a warning when they sum off 1 by more than 1e-6.
    """
    manifest = os.path.join(directory, "prior.txt")
    with open(manifest, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("tau"):
        raise ValueError("prior.txt must start with a `tau <float>` line")
    tau = float(lines[0].split()[1])
    means, weights = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "component":
            raise ValueError(f"bad manifest line: {ln!r}")
        weights.append(float(parts[1]))
        means.append(imagecore.load_image(
            os.path.join(directory, parts[2])).data)
    total = sum(weights)
    if abs(total - 1.0) > 1e-6:
        warnings.warn(f"prior weights sum to {total}; re-normalizing")
    return GmmDenoiser(means, weights, tau)
