"""Frequency machinery: one-scale discrete shearlet transform, Haar lifting, block DCT.

The shearlet system is band-limited and built in the frequency domain: a
Meyer-type lowpass window plus six directional wedges, three per frequency
cone (horizontal cone split by the slope w2/w1, vertical cone by w1/w2).
Squared windows sum to one at every frequency, so the transform is a Parseval
frame and the adjoint is the inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, fft2, idctn, ifft2

N_DIRECTIONS = 6

# Lowpass passband / stopband edges in cycles per pixel (max-norm radius).
# The wide lowpass keeps the 4x4-DCT AC carriers of the approximate band
# inside its passband, and leaves the detail bands with little host energy
# at block-DC frequencies.
LOWPASS_PASS = 1.0 / 8
LOWPASS_STOP = 3.0 / 8
# Relative width of the angular transitions between neighbouring wedges.
WEDGE_OVERLAP = 0.5


class TransformError(ValueError):
    pass


def meyer_aux(x):
    """Meyer auxiliary function: 0 below 0, 1 above 1, v(x) + v(1 - x) = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def _lowpass(r, lo, hi):
    return np.cos(0.5 * np.pi * meyer_aux((r - lo) / (hi - lo)))


def _pseudo_angle(w1, w2):
    """Continuous direction coordinate in [-1, 3), period 4, invariant to w -> -w.

    Horizontal cone (|w2| <= |w1|) maps to its slope w2/w1 in [-1, 1], the
    vertical cone to 2 - w1/w2 in [1, 3].
    """
    a1, a2 = np.abs(w1), np.abs(w2)
    horiz = a2 <= a1
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(horiz, w2 / np.where(a1 > 0, w1, 1.0), 2.0 - w1 / np.where(a2 > 0, w2, 1.0))
    p = np.where(p >= 3.0, p - 4.0, p)
    return p


def _angular_windows(p, count=N_DIRECTIONS, overlap=WEDGE_OVERLAP):
    """Smooth periodic partition of unity (squared) over the pseudo-angle."""
    width = 4.0 / count
    # cone seams (p = +-1) fall on wedge edges, so each cone gets count/2 wedges
    centers = -1.0 + width / 2 + width * np.arange(count)
    half = overlap * width / 2
    out = []
    for c in centers:
        d = (p - c + 2.0) % 4.0 - 2.0  # signed periodic distance
        edge = width / 2
        # rising edge on the left, falling on the right
        t = (np.abs(d) - (edge - half)) / (2 * half)
        out.append(np.cos(0.5 * np.pi * meyer_aux(t)))
    return out


@dataclass(frozen=True)
class ShearletSystem:
    """Frequency windows for one image size: index 0 lowpass, 1..6 directional."""

    rows: int
    cols: int
    windows: np.ndarray  # (7, rows, cols), real and even in frequency

    @property
    def count(self) -> int:
        return self.windows.shape[0]

    def frame_bound_error(self) -> float:
        return float(np.max(np.abs(np.sum(self.windows**2, axis=0) - 1.0)))


@lru_cache(maxsize=8)
def shearlet_system(rows: int, cols: int) -> ShearletSystem:
    if rows % 2 or cols % 2:
        raise TransformError(f"shearlet transform needs even dimensions, got {rows}x{cols}")
    if rows < 16 or cols < 16:
        raise TransformError("shearlet transform needs at least 16x16")
    w1 = np.fft.fftfreq(rows)[:, None]
    w2 = np.fft.fftfreq(cols)[None, :]
    r = np.maximum(np.abs(w1), np.abs(w2))
    low = _lowpass(r, LOWPASS_PASS, LOWPASS_STOP)
    high = np.sqrt(np.clip(1.0 - low**2, 0.0, 1.0))
    p = _pseudo_angle(w1 + 0 * w2, w2 + 0 * w1)
    angular = _angular_windows(p)
    norm = np.sqrt(sum(a**2 for a in angular))
    wins = [low] + [high * a / norm for a in angular]
    wins = np.stack(wins)
    # Nyquist rows/cols are their own mirror; symmetrize so coefficients stay real.
    mirror = np.roll(wins[:, ::-1, ::-1], shift=(1, 1), axis=(1, 2))
    wins = np.sqrt(0.5 * (wins**2 + mirror**2))
    wins.flags.writeable = False
    return ShearletSystem(rows, cols, wins)


@dataclass(frozen=True)
class ShearletPyramid:
    approx: np.ndarray
    details: np.ndarray  # (6, rows, cols)

    def bands(self) -> np.ndarray:
        return np.concatenate([self.approx[None], self.details])


def dst_forward(plane, system: ShearletSystem | None = None) -> ShearletPyramid:
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise TransformError("dst_forward expects a 2-D plane")
    if system is None:
        system = shearlet_system(*x.shape)
    if (system.rows, system.cols) != x.shape:
        raise TransformError("shearlet system size does not match the plane")
    spec = fft2(x)
    coeffs = ifft2(system.windows * spec[None], axes=(-2, -1)).real
    return ShearletPyramid(coeffs[0], coeffs[1:])


def dst_inverse(pyr: ShearletPyramid, system: ShearletSystem | None = None) -> np.ndarray:
    details = np.asarray(pyr.details, dtype=np.float64)
    approx = np.asarray(pyr.approx, dtype=np.float64)
    if details.ndim != 3 or details.shape[0] != N_DIRECTIONS:
        raise TransformError(f"expected {N_DIRECTIONS} detail bands, got {details.shape[:1]}")
    if details.shape[1:] != approx.shape:
        raise TransformError("band sizes differ")
    if system is None:
        system = shearlet_system(*approx.shape)
    bands = np.concatenate([approx[None], details])
    spec = fft2(bands, axes=(-2, -1))
    return ifft2(np.sum(system.windows * spec, axis=0)).real


# -- Haar lifting -----------------------------------------------------------


@dataclass(frozen=True)
class WaveletQuad:
    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray


def _lift(even, odd):
    detail = odd - even
    approx = even + detail / 2
    return approx, detail


def _unlift(approx, detail):
    even = approx - detail / 2
    odd = even + detail
    return even, odd


def lwt_forward(plane) -> WaveletQuad:
    """One level of 2-D Haar lifting; LL keeps the local mean (LL of c is c).

    Rows are lifted first (giving L and H halves), then columns. LH is the
    column-detail of the row-approximation.
    """
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] % 2 or x.shape[1] % 2:
        raise TransformError(f"Haar lifting needs even dimensions, got {x.shape}")
    lo, hi = _lift(x[:, 0::2], x[:, 1::2])
    ll, lh = _lift(lo[0::2, :], lo[1::2, :])
    hl, hh = _lift(hi[0::2, :], hi[1::2, :])
    return WaveletQuad(ll, lh, hl, hh)


def lwt_inverse(quad: WaveletQuad) -> np.ndarray:
    shapes = {np.shape(quad.LL), np.shape(quad.LH), np.shape(quad.HL), np.shape(quad.HH)}
    if len(shapes) != 1:
        raise TransformError("wavelet sub-bands differ in size")
    r, c = np.shape(quad.LL)
    lo = np.empty((2 * r, c))
    hi = np.empty((2 * r, c))
    lo[0::2], lo[1::2] = _unlift(np.asarray(quad.LL, float), np.asarray(quad.LH, float))
    hi[0::2], hi[1::2] = _unlift(np.asarray(quad.HL, float), np.asarray(quad.HH, float))
    out = np.empty((2 * r, 2 * c))
    out[:, 0::2], out[:, 1::2] = _unlift(lo, hi)
    return out


# -- block DCT ---------------------------------------------------------------


def _check_side(shape, side):
    if side <= 0 or shape[-2] % side or shape[-1] % side:
        raise TransformError(f"block side {side} does not divide {shape}")


def dct_block(plane, side: int = 4) -> np.ndarray:
    """Orthonormal 2-D DCT-II of every side x side block, laid out in place."""
    x = np.asarray(plane, dtype=np.float64)
    _check_side(x.shape, side)
    r, c = x.shape[-2:]
    lead = x.shape[:-2]
    b = x.reshape(*lead, r // side, side, c // side, side)
    out = dctn(b, type=2, norm="ortho", axes=(-3, -1))
    return out.reshape(x.shape)


def idct_block(coeffs, side: int = 4) -> np.ndarray:
    x = np.asarray(coeffs, dtype=np.float64)
    _check_side(x.shape, side)
    r, c = x.shape[-2:]
    lead = x.shape[:-2]
    b = x.reshape(*lead, r // side, side, c // side, side)
    out = idctn(b, type=2, norm="ortho", axes=(-3, -1))
    return out.reshape(x.shape)


@lru_cache(maxsize=None)
def _zigzag_order(side):
    order = sorted(
        ((i, j) for i in range(side) for j in range(side)),
        key=lambda ij: (ij[0] + ij[1], ij[0] if (ij[0] + ij[1]) % 2 else ij[1]),
    )
    return tuple(order)


def zigzag_index(side: int, k: int) -> tuple:
    """JPEG zigzag position of the k-th coefficient in a side x side block."""
    if not 0 <= k < side * side:
        raise TransformError(f"zigzag index {k} out of range for side {side}")
    return _zigzag_order(side)[k]
