"""Image container, file I/O, YCoCg-R color handling and block partitioning."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage


class ImageError(ValueError):
    """Raised for unreadable, unsupported or malformed images."""


_SUPPORTED = {"PPM", "PNG", "PGM", "PBM", "BMP", "TIFF", "JPEG"}


@dataclass(frozen=True)
class Image:
    """An 8-bit raster held as float64 samples in [0, 255].

    ``samples`` has shape (rows, cols) for grayscale or (rows, cols, 3) for RGB.
    Rows index M (first pixel axis) and cols index N.
    """

    samples: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
            raise ImageError(f"unsupported sample shape {a.shape}")
        if a.shape[0] == 0 or a.shape[1] == 0:
            raise ImageError("zero-dimension image")
        if np.any(a < 0) or np.any(a > 255) or not np.all(np.isfinite(a)):
            raise ImageError("samples must lie in [0, 255]")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "samples", a)

    @property
    def rows(self) -> int:
        return self.samples.shape[0]

    @property
    def cols(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    @property
    def shape(self) -> tuple:
        return self.samples.shape

    def luma(self) -> np.ndarray:
        """Plane the watermark lives in: Y of YCoCg-R, or the gray plane itself."""
        if self.channels == 1:
            return np.array(self.samples)
        return to_ycocg(self).Y.astype(np.float64)

    def to_uint8(self) -> np.ndarray:
        return quantize_8bit(self.samples)


def quantize_8bit(a: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255]."""
    a = np.asarray(a, dtype=np.float64)
    r = np.sign(a) * np.floor(np.abs(a) + 0.5)
    return np.clip(r, 0, 255).astype(np.uint8)


def from_array(a) -> Image:
    return Image(np.asarray(a, dtype=np.float64))


def load_image(path) -> Image:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ImageError(f"no such file: {path}")
    try:
        with PILImage.open(path) as im:
            fmt = im.format
            if fmt not in _SUPPORTED:
                raise ImageError(f"unsupported format {fmt!r}")
            im.load()
            if im.mode == "P":
                im = im.convert("RGB")
            elif im.mode in ("I;16", "I", "F"):
                raise ImageError(f"unsupported bit depth ({im.mode})")
            if im.mode == "1":
                arr = np.asarray(im, dtype=np.uint8) * 255
            elif im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("RGB", "RGBA", "CMYK", "YCbCr"):
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            elif im.mode in ("LA",):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                raise ImageError(f"unsupported pixel mode {im.mode!r}")
    except ImageError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageError(f"corrupt input: {path}: {exc}") from exc
    return Image(arr.astype(np.float64))


def save_image(img, path) -> None:
    """Write PGM/PPM/PNG/PBM chosen by extension; output is byte-deterministic."""
    path = os.fspath(path)
    a = img.to_uint8() if isinstance(img, Image) else quantize_8bit(img)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pbm":
        PILImage.fromarray(a > 127).convert("1").save(path, format="PPM")
        return
    fmt = {".pgm": "PPM", ".ppm": "PPM", ".png": "PNG"}.get(ext)
    if fmt is None:
        raise ImageError(f"unsupported output extension {ext!r}")
    if ext == ".pgm" and a.ndim == 3:
        raise ImageError("PGM output requires a grayscale image")
    if ext == ".ppm" and a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    PILImage.fromarray(a).save(path, format=fmt)


# -- color -------------------------------------------------------------------


@dataclass(frozen=True)
class ColorPlanes:
    Y: np.ndarray
    Co: np.ndarray
    Cg: np.ndarray


def to_ycocg(img: Image) -> ColorPlanes:
    """Integer-reversible YCoCg-R lifting (exact on 8-bit RGB)."""
    if img.channels != 3:
        raise ImageError("YCoCg conversion needs a 3-channel image")
    rgb = img.to_uint8().astype(np.int64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    co = r - b
    t = b + (co >> 1)
    cg = g - t
    y = t + (cg >> 1)
    return ColorPlanes(y, co, cg)


def from_ycocg(planes: ColorPlanes) -> Image:
    """Inverse lifting; Y may be float (it is rounded first), result is clamped."""
    y = np.asarray(planes.Y)
    if y.dtype.kind == "f":
        y = quantize_8bit(y).astype(np.int64)
    y = y.astype(np.int64)
    co = np.asarray(planes.Co, dtype=np.int64)
    cg = np.asarray(planes.Cg, dtype=np.int64)
    t = y - (cg >> 1)
    g = cg + t
    b = t - (co >> 1)
    r = b + co
    rgb = np.stack([r, g, b], axis=-1)
    return Image(np.clip(rgb, 0, 255).astype(np.float64))


def replace_luma(img: Image, plane: np.ndarray) -> Image:
    """Put a (possibly float) luminance plane back into ``img``.

    Chrominance is left untouched so color images differ only through Y.
    """
    if img.channels == 1:
        return Image(quantize_8bit(plane).astype(np.float64))
    p = to_ycocg(img)
    return from_ycocg(ColorPlanes(plane, p.Co, p.Cg))


# -- blocks ------------------------------------------------------------------


@dataclass(frozen=True)
class BlockGrid:
    side: int
    rows: int
    cols: int

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def blocks(self, plane: np.ndarray) -> np.ndarray:
        """View ``plane`` as (rows, cols, side, side) in row-major block order."""
        return to_blocks(plane, self.side)

    def reassemble(self, blocks: np.ndarray) -> np.ndarray:
        return from_blocks(blocks)


def partition(img, m: int = 8) -> BlockGrid:
    shape = img.shape if isinstance(img, Image) else np.shape(img)
    rows, cols = shape[0], shape[1]
    if m <= 0 or rows % m or cols % m:
        raise ImageError(f"image {rows}x{cols} is not divisible into {m}x{m} blocks")
    return BlockGrid(m, rows // m, cols // m)


def to_blocks(plane: np.ndarray, side: int) -> np.ndarray:
    r, c = plane.shape
    if r % side or c % side:
        raise ImageError(f"plane {r}x{c} is not divisible by block side {side}")
    return plane.reshape(r // side, side, c // side, side).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    br, bc, s, t = blocks.shape
    return blocks.swapaxes(1, 2).reshape(br * s, bc * t)
