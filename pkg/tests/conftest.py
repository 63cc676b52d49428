import numpy as np
import pytest


def smooth_means(k, height, width, channels=3, seed=0, amplitude=0.6,
                 period=32):
    """K distinct smooth images in [-amplitude, amplitude]: cosine mixtures
    with per-component random phases.

    The pattern repeats every `period` pixels. Keeping period equal to the
    tile stride makes the prior translation-invariant across tile offsets,
    like a denoiser trained on random crops; otherwise tiled generation has
    genuine seams no overlap constraint can remove.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    u = 2 * np.pi * yy / period
    v = 2 * np.pi * xx / period
    means = []
    for _ in range(k):
        img = np.zeros((height, width, channels))
        for c in range(channels):
            ph = rng.uniform(0, 2 * np.pi, size=4)
            f = (np.cos(u + ph[0]) + np.cos(v + ph[1]) +
                 0.5 * np.cos(u + v + ph[2]) + 0.5 * np.cos(u - v + ph[3]))
            img[:, :, c] = f / 3.0 * amplitude
        means.append(img)
    return means


def constant_means(levels, height, width, channels=3):
    return [np.full((height, width, channels), float(v)) for v in levels]


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
