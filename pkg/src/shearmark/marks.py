"""Watermark generation: keyed bit streams, XOR encryption, chaotic shuffle, tiling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

UINT64_MAX = 2**64 - 1

LOGISTIC_R = 3.99
LOGISTIC_BURN_IN = 1000


class MarkError(ValueError):
    pass


@dataclass(frozen=True)
class KeySet:
    key1: int  # XOR keystream
    key2: int  # chaotic shuffle
    key3: int  # authentication sequence

    def __post_init__(self):
        for name in ("key1", "key2", "key3"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= UINT64_MAX:
                raise MarkError(f"{name} must be an unsigned 64-bit integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @classmethod
    def parse(cls, text: str) -> "KeySet":
        """Three whitespace/comma separated values, decimal or 0x-prefixed hex."""
        parts = text.replace(",", " ").split()
        if len(parts) != 3:
            raise MarkError(f"expected three keys, got {len(parts)}")
        try:
            vals = [int(p, 0) for p in parts]
        except ValueError as exc:
            raise MarkError(f"bad key value: {exc}") from exc
        return cls(*vals)

    def fingerprint(self) -> str:
        # short, non-reversible tag so reports can say which keys were used
        h = hashlib.sha256(f"{self.key1}:{self.key2}:{self.key3}".encode()).hexdigest()
        return h[:16]


@dataclass(frozen=True)
class MarkSet:
    logo: np.ndarray  # w~_c, (M/2m, N/2n)
    encrypted: np.ndarray  # w~_c'
    shuffled: np.ndarray  # w~_c''
    copyright: np.ndarray  # w_c, (M/m, N/n): 2x2 tiling of the shuffled logo
    auth: np.ndarray  # w_a, (M/m, N/n)
    keystream: np.ndarray  # chi


def gen_binary_sequence(seed: int, rows: int, cols: int) -> np.ndarray:
    """Keyed pseudo-random bits: a seeded N(0,1) stream thresholded at its median."""
    if rows <= 0 or cols <= 0:
        raise MarkError("sequence shape must be positive")
    z = np.random.default_rng(int(seed)).standard_normal(rows * cols)
    bits = np.zeros(z.size, dtype=np.uint8)
    # median split gives exactly half ones (ties are measure-zero)
    bits[np.argsort(z, kind="stable")[z.size // 2 :]] = 1
    return bits.reshape(rows, cols)


def xor_mask(mark, chi) -> np.ndarray:
    a = np.asarray(mark, dtype=np.uint8)
    b = np.asarray(chi, dtype=np.uint8)
    if a.shape != b.shape:
        raise MarkError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.bitwise_xor(a, b)


def _logistic_seed(key: int) -> float:
    # map the key into (0.1, 0.9), away from the map's fixed points and 0/1
    frac = ((int(key) * 0x9E3779B97F4A7C15) % 2**64) / 2**64
    return 0.1 + 0.8 * frac


def chaotic_sequence(key: int, length: int) -> np.ndarray:
    x = _logistic_seed(key)
    for _ in range(LOGISTIC_BURN_IN):
        x = LOGISTIC_R * x * (1.0 - x)
    out = np.empty(length)
    for i in range(length):
        x = LOGISTIC_R * x * (1.0 - x)
        out[i] = x
    return out


def ccs_permutation(key: int, length: int) -> np.ndarray:
    return np.argsort(chaotic_sequence(key, length), kind="stable")


def ccs_shuffle(mark, key2: int) -> np.ndarray:
    a = np.asarray(mark)
    p = ccs_permutation(key2, a.size)
    return a.ravel()[p].reshape(a.shape)


def ccs_unshuffle(shuffled, key2: int) -> np.ndarray:
    a = np.asarray(shuffled)
    p = ccs_permutation(key2, a.size)
    out = np.empty(a.size, dtype=a.dtype)
    out[p] = a.ravel()
    return out.reshape(a.shape)


def tile_four(small) -> np.ndarray:
    return np.tile(np.asarray(small), (2, 2))


def copy_positions(rows: int, cols: int):
    """Index arrays of the four carriers of every logo bit in the tiled mark.

    Returns a list of four (row_slice, col_slice) pairs; copy q of logo bit
    (i, j) lives at tiled[row_slice][i, col_slice][j].
    """
    h, w = rows // 2, cols // 2
    return [
        (slice(0, h), slice(0, w)),
        (slice(h, 2 * h), slice(0, w)),
        (slice(0, h), slice(w, 2 * w)),
        (slice(h, 2 * h), slice(w, 2 * w)),
    ]


def binarize_logo(logo) -> np.ndarray:
    a = np.asarray(logo)
    if a.ndim == 3:
        a = a.mean(axis=2)
    if a.dtype == bool or a.max(initial=0) <= 1:
        return (a > 0).astype(np.uint8)
    return (a >= 128).astype(np.uint8)


def fit_logo(logo, shape) -> np.ndarray:
    """Binarize and nearest-neighbour resample a logo to ``shape`` (rows, cols)."""
    bits = binarize_logo(logo)
    if bits.shape == tuple(shape):
        return bits
    ri = (np.arange(shape[0]) * bits.shape[0]) // shape[0]
    ci = (np.arange(shape[1]) * bits.shape[1]) // shape[1]
    return bits[np.ix_(ri, ci)]


def mark_shapes(rows: int, cols: int, m: int = 8):
    if rows % (2 * m) or cols % (2 * m):
        raise MarkError(f"host {rows}x{cols} must be divisible by {2 * m}")
    return (rows // (2 * m), cols // (2 * m)), (rows // m, cols // m)


def prepare_marks(logo, keys: KeySet, rows: int, cols: int, m: int = 8) -> MarkSet:
    logo_shape, tiled_shape = mark_shapes(rows, cols, m)
    bits = binarize_logo(logo)
    if bits.shape != logo_shape:
        raise MarkError(f"logo must be {logo_shape[0]}x{logo_shape[1]}, got {bits.shape[0]}x{bits.shape[1]}")
    chi = gen_binary_sequence(keys.key1, *logo_shape)
    enc = xor_mask(bits, chi)
    shuf = ccs_shuffle(enc, keys.key2)
    wc = tile_four(shuf)
    wa = gen_binary_sequence(keys.key3, *tiled_shape)
    return MarkSet(bits, enc, shuf, wc, wa, chi)


def auth_mark(keys: KeySet, rows: int, cols: int, m: int = 8) -> np.ndarray:
    _, tiled = mark_shapes(rows, cols, m)
    return gen_binary_sequence(keys.key3, *tiled)


def recover_logo(shuffled_bits, keys: KeySet) -> np.ndarray:
    """Undo shuffle then XOR; inverse of the first three preparation steps."""
    s = np.asarray(shuffled_bits, dtype=np.uint8)
    chi = gen_binary_sequence(keys.key1, *s.shape)
    return xor_mask(ccs_unshuffle(s, keys.key2), chi)


def default_logo(rows: int = 32, cols: int = 32) -> np.ndarray:
    """A recognisable binary test logo: ring plus cross."""
    i, j = np.mgrid[0:rows, 0:cols]
    ci, cj = (rows - 1) / 2, (cols - 1) / 2
    r = np.hypot((i - ci) / rows, (j - cj) / cols)
    ring = (r > 0.28) & (r < 0.42)
    cross = (np.abs(i - ci) < rows / 12) | (np.abs(j - cj) < cols / 12)
    return (ring | (cross & (r < 0.28))).astype(np.uint8)
