"""Images in model range [-1, 1], windowed crop/blit, and PPM/PGM file I/O.

Pixel data is float64 of shape (height, width, channels) with channels 1 or 3.
Files are binary PGM (P5) for single-channel and PPM (P6) for 3-channel
images, maxval 255. The 8-bit code k maps to the model value 2k/255 - 1, so
a save/load cycle is exactly the quantizer and nothing else.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np


class CodecError(ValueError):
    """Malformed or unsupported PPM/PGM data."""


@dataclasses.dataclass(frozen=True)
class Window:
    """A rectangle fully contained in some parent image."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"window dims must be positive, got {self}")
        if self.top < 0 or self.left < 0:
            raise ValueError(f"window origin must be non-negative, got {self}")

    def slices(self):
        return (slice(self.top, self.top + self.height),
                slice(self.left, self.left + self.width))


@dataclasses.dataclass(frozen=True)
class Image:
    """Immutable raster; data is read-only float64 (H, W, C), C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image data must be HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {arr.shape[2]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains NaN or Inf")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _check_window(img: Image, w: Window):
    if w.top + w.height > img.height or w.left + w.width > img.width:
        raise ValueError(
            f"window {w} out of bounds for {img.height}x{img.width} image")


def crop(img: Image, w: Window) -> Image:
    """Extract the sub-image under w."""
    _check_window(img, w)
    ys, xs = w.slices()
    return Image(img.data[ys, xs, :])


def blit(dst: Image, src: Image, w: Window) -> Image:
    """Return dst with the pixels under w replaced by src."""
    _check_window(dst, w)
    if (src.height, src.width) != (w.height, w.width):
        raise ValueError(
            f"source dims {src.height}x{src.width} do not match window {w}")
    if src.channels != dst.channels:
        raise ValueError("channel count mismatch in blit")
    out = dst.data.copy()
    ys, xs = w.slices()
    out[ys, xs, :] = src.data
    return Image(out)


def quantize(img: Image) -> np.ndarray:
    """Clamp to [-1, 1] and map to 8-bit codes; only the codec clamps."""
    v = np.clip(img.data, -1.0, 1.0)
    return np.rint((v + 1.0) * (255.0 / 2.0)).astype(np.uint8)


def dequantize(codes: np.ndarray) -> Image:
    return Image(codes.astype(np.float64) * (2.0 / 255.0) - 1.0)


def save_image(path: str | os.PathLike, img: Image) -> None:
    """Write binary PGM (1 channel) or PPM (3 channels), maxval 255."""
    codes = quantize(img)
    magic = b"P5" if img.channels == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
        f.write(codes.tobytes())


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise CodecError("unexpected end of header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def load_image(path: str | os.PathLike) -> Image:
    """Read a binary PGM/PPM file written by save_image (or compatible)."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic == b"P5":
            channels = 1
        elif magic == b"P6":
            channels = 3
        else:
            raise CodecError(f"unsupported magic {magic!r}")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            maxval = int(_read_token(f))
        except ValueError as e:
            raise CodecError(f"malformed header: {e}") from None
        if maxval != 255:
            raise CodecError(f"unsupported maxval {maxval}, expected 255")
        if width <= 0 or height <= 0:
            raise CodecError(f"bad dimensions {width}x{height}")
        n = width * height * channels
        payload = f.read(n)
        if len(payload) != n:
            raise CodecError(
                f"truncated payload: expected {n} bytes, got {len(payload)}")
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(
        height, width, channels)
    return dequantize(codes)
