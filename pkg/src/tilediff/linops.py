"""Degradation operators A with explicit pseudo-inverses and spectra.

Every operator here is surjective with a single singular value s shared by
all measurement modes (null-space modes have s = 0). That makes the
SVD-based rescaling V diag(f(s_i)) pinv(S) U^T reduce to f(s) * pinv(r),
so the noisy-path coefficients can be applied without materializing an SVD.
All apply methods are pure and the operators are immutable.
"""

from __future__ import annotations

import math

import numpy as np

from . import imagecore


class LinearOperator:
    """Matrix-free linear degradation with pseudo-inverse and spectrum.

    input_shape is the image shape (H, W, C); output_shape is the
    measurement shape. sing_value is the singular value shared by all
    measurement modes.
    """

    input_shape: tuple
    output_shape: tuple
    sing_value: float

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pinv(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def range_project(self, x: np.ndarray) -> np.ndarray:
        """Apply the range projector pinv(A) A."""
        return self.pinv(self.forward(x))

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.output_shape))

    @property
    def mode_classes(self):
        """(singular value, mode count) pairs; counts sum to input_dim."""
        classes = [(self.sing_value, self.output_dim)]
        null = self.input_dim - self.output_dim
        if null > 0:
            classes.append((0.0, null))
        return classes

    def pinv_scaled(self, residual: np.ndarray, f) -> np.ndarray:
        """Apply V diag(f(s_i)) pinv(S) U^T to a measurement-space residual.

        With f identically 1 this is exactly pinv; null-space modes never
        contribute.
        """
        if residual.shape != tuple(self.output_shape):
            raise ValueError(
                f"residual shape {residual.shape} != {self.output_shape}")
        return float(f(self.sing_value)) * self.pinv(residual)

    def dense_matrix(self) -> np.ndarray:
        """Explicit (output_dim x input_dim) matrix; test oracles only."""
        d = self.input_dim
        if d > 4096:
            raise ValueError(f"dense matrix limited to D <= 4096, got {d}")
        cols = np.zeros((self.output_dim, d))
        basis = np.zeros(d)
        for j in range(d):
            basis[j] = 1.0
            cols[:, j] = self.forward(basis.reshape(self.input_shape)).ravel()
            basis[j] = 0.0
        return cols


class AvgPool(LinearOperator):
    """p x p block mean per channel; pseudo-inverse is replication."""

    def __init__(self, input_shape, p: int):
        h, w, c = input_shape
        if p < 1:
            raise ValueError(f"block size must be >= 1, got {p}")
        if h % p or w % p:
            raise ValueError(f"dims {h}x{w} not divisible by block size {p}")
        self.input_shape = (h, w, c)
        self.output_shape = (h // p, w // p, c)
        self.p = p
        self.sing_value = 1.0 / p

    def forward(self, x):
        h, w, c = self.input_shape
        p = self.p
        return x.reshape(h // p, p, w // p, p, c).mean(axis=(1, 3))

    def pinv(self, y):
        return np.repeat(np.repeat(y, self.p, axis=0), self.p, axis=1)


class Mask(LinearOperator):
    """Selects known pixels; pseudo-inverse scatters, zeros elsewhere."""

    def __init__(self, known: np.ndarray, channels: int | None = None):
        known = np.asarray(known)
        if known.dtype != bool:
            uniq = np.unique(known)
            if not np.all(np.isin(uniq, (0, 1))):
                raise ValueError("mask must be binary (0 or 1)")
            known = known.astype(bool)
        if known.ndim == 2:
            if channels is None:
                raise ValueError("2-D mask needs an explicit channel count")
            known = np.repeat(known[:, :, None], channels, axis=2)
        if known.ndim != 3:
            raise ValueError(f"mask must be HxW or HxWxC, got {known.shape}")
        known = known.copy()
        known.flags.writeable = False
        self.known = known
        self.input_shape = known.shape
        self.output_shape = (int(known.sum()),)
        self.sing_value = 1.0

    def forward(self, x):
        if x.shape != self.input_shape:
            raise ValueError(f"shape {x.shape} != {self.input_shape}")
        return x[self.known]

    def pinv(self, y):
        out = np.zeros(self.input_shape)
        out[self.known] = y
        return out


class Gray(LinearOperator):
    """Per-pixel channel mean; pseudo-inverse replicates to all channels."""

    def __init__(self, input_shape):
        h, w, c = input_shape
        if c != 3:
            raise ValueError(f"grayscale operator needs 3 channels, got {c}")
        self.input_shape = (h, w, 3)
        self.output_shape = (h, w, 1)
        self.sing_value = 1.0 / math.sqrt(3.0)

    def forward(self, x):
        return x.mean(axis=2, keepdims=True)

    def pinv(self, y):
        return np.repeat(y, 3, axis=2)


class Identity(LinearOperator):
    """A = I; every mode has s = 1."""

    def __init__(self, input_shape):
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(input_shape)
        self.sing_value = 1.0

    def forward(self, x):
        return x

    def pinv(self, y):
        return y


def op_avgpool(input_shape, p: int) -> AvgPool:
    return AvgPool(input_shape, p)


def op_mask(known: np.ndarray, channels: int | None = None) -> Mask:
    return Mask(known, channels)


def op_gray(input_shape) -> Gray:
    return Gray(input_shape)


def op_identity(input_shape) -> Identity:
    return Identity(input_shape)


def pinv_scaled(op: LinearOperator, residual: np.ndarray, f) -> np.ndarray:
    return op.pinv_scaled(residual, f)


def load_mask(path) -> np.ndarray:
    """Read a binary mask from PGM: 0 = missing, 255 = known.

    Any intermediate gray level is an input error.
    """
    img = imagecore.load_image(path)
    if img.channels != 1:
        raise ValueError("mask file must be single-channel PGM")
    vals = img.data[:, :, 0]
    known = vals >= 1.0
    missing = vals <= -1.0
    if not np.all(known | missing):
        raise ValueError("mask contains intermediate values; only 0/255 allowed")
    return known
