"""Block texture analysis: LBP / entropy / STD / Gabor features, k-means, CH index, xi map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from skimage.feature import local_binary_pattern

from .image import to_blocks

XI_MIN = 0.6
XI_MAX = 1.0
MAX_ENTROPY = 8.0  # log2(256)


class TextureError(ValueError):
    pass


# -- features ----------------------------------------------------------------


@dataclass(frozen=True)
class GaborBank:
    thetas: tuple = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
    frequency: float = 0.25
    sigma_x: float = 2.0
    sigma_y: float = 2.0

    def kernels(self):
        """Complex kernels over a +-3 sigma support, each with unit L2 norm."""
        half = int(np.ceil(3 * max(self.sigma_x, self.sigma_y)))
        y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
        out = []
        for th in self.thetas:
            xr = x * np.cos(th) + y * np.sin(th)
            yr = -x * np.sin(th) + y * np.cos(th)
            env = np.exp(-0.5 * (xr**2 / self.sigma_x**2 + yr**2 / self.sigma_y**2))
            g = env * np.exp(2j * np.pi * self.frequency * xr)
            out.append(g / np.sqrt(np.sum(np.abs(g) ** 2)))
        return out


@dataclass(frozen=True)
class BlockFeatures:
    raw: np.ndarray  # (blocks, 4): LBP, entropy, STD, Gabor
    normalized: np.ndarray  # same, min-max scaled per column to [0, 1]
    grid_shape: tuple

    NAMES = ("lbp", "entropy", "std", "gabor")


def block_entropy(plane, m: int = 8) -> np.ndarray:
    """256-bin Shannon entropy (bits) of every m x m block."""
    q = np.clip(np.floor(np.asarray(plane, float) + 0.5), 0, 255).astype(np.int64)
    b = to_blocks(q, m)
    R, C = b.shape[:2]
    flat = b.reshape(R * C, m * m)
    idx = flat + 256 * np.arange(R * C)[:, None]
    counts = np.bincount(idx.ravel(), minlength=256 * R * C).reshape(R * C, 256)
    p = counts / (m * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p > 0, p * np.log2(p), 0.0), axis=1)
    return h.reshape(R, C)


def block_std(plane, m: int = 8) -> np.ndarray:
    return to_blocks(np.asarray(plane, float), m).std(axis=(2, 3))


def gabor_magnitude(plane, bank: GaborBank | None = None) -> np.ndarray:
    bank = bank or GaborBank()
    x = np.asarray(plane, float)
    mags = [np.abs(fftconvolve(x, k, mode="same")) for k in bank.kernels()]
    return np.mean(mags, axis=0)


def _minmax(col):
    lo, hi = col.min(), col.max()
    if hi - lo <= 0:
        return np.zeros_like(col)
    return (col - lo) / (hi - lo)


def block_features(plane, m: int = 8, bank: GaborBank | None = None) -> BlockFeatures:
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise TextureError("block_features expects a grayscale plane")
    lbp = local_binary_pattern(np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8), 8, 1, method="uniform")
    R, C = x.shape[0] // m, x.shape[1] // m
    f_lbp = to_blocks(lbp, m).mean(axis=(2, 3))
    f_ent = block_entropy(x, m)
    f_std = block_std(x, m)
    f_gab = to_blocks(gabor_magnitude(x, bank), m).mean(axis=(2, 3))
    raw = np.stack([f.ravel() for f in (f_lbp, f_ent, f_std, f_gab)], axis=1)
    norm = np.stack([_minmax(raw[:, i]) for i in range(4)], axis=1)
    return BlockFeatures(raw, norm, (R, C))


# -- clustering --------------------------------------------------------------


def _sqdist(X, C):
    return np.sum(X**2, 1)[:, None] - 2 * X @ C.T + np.sum(C**2, 1)[None, :]


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with chosen centers
            i = rng.integers(n)
        else:
            i = rng.choice(n, p=d2 / total)
        centers.append(X[i])
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return np.array(centers)


def kmeans(features, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6):
    """Lloyd's algorithm from k-means++ seeds. Returns (labels in 1..k, centroids)."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1:
        raise TextureError("k must be >= 1")
    distinct = len(np.unique(X, axis=0))
    if k > distinct:
        raise TextureError(f"k={k} exceeds the {distinct} distinct points")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = np.zeros(len(X), dtype=np.int64)
    for _ in range(max_iter):
        labels = np.argmin(_sqdist(X, C), axis=1)
        newC = C.copy()
        for q in range(k):
            members = X[labels == q]
            if len(members):
                newC[q] = members.mean(axis=0)
            else:
                # re-seed an emptied cluster on the worst-fit point
                far = np.argmax(np.min(_sqdist(X, C), axis=1))
                newC[q] = X[far]
        shift = np.max(np.sqrt(np.sum((newC - C) ** 2, axis=1)))
        C = newC
        if shift < tol:
            break
    labels = np.argmin(_sqdist(X, C), axis=1)
    return labels + 1, C


def calinski_harabasz(features, labels) -> float:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    ks = np.unique(labels)
    n, k = len(X), len(ks)
    if k < 2 or k >= n:
        raise TextureError("CH needs 2 <= k < number of points")
    mean = X.mean(axis=0)
    B = W = 0.0
    for q in ks:
        Xq = X[labels == q]
        cq = Xq.mean(axis=0)
        B += len(Xq) * np.sum((cq - mean) ** 2)
        W += np.sum((Xq - cq) ** 2)
    if W == 0:
        return np.inf
    return (B / (k - 1)) / (W / (n - k))


def select_k(features, tau: int = 8, seed: int = 0):
    """argmax of CH over k = 2..tau (ties to the smaller k). Returns (k*, scores)."""
    X = np.asarray(features, dtype=np.float64)
    if tau < 2:
        raise TextureError("tau must be >= 2")
    if len(X) <= tau:
        raise TextureError(f"need more than tau={tau} points, got {len(X)}")
    distinct = len(np.unique(X, axis=0))
    scores = {}
    for k in range(2, min(tau, distinct) + 1):
        labels, _ = kmeans(X, k, seed)
        if len(np.unique(labels)) < 2:
            continue
        scores[k] = calinski_harabasz(X, labels)
    if not scores:
        return 1, scores
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best), scores


# -- texture map -------------------------------------------------------------


@dataclass(frozen=True)
class TextureMap:
    labels: np.ndarray  # (R, C), 1..k
    k: int
    cluster_entropy: np.ndarray  # (k,), mean block entropy of each cluster
    block_entropy: np.ndarray  # (R, C)
    xi: np.ndarray  # (R, C) in [0.6, 1]


def entropy_to_xi(s):
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, MAX_ENTROPY)
    return XI_MIN + (XI_MAX - XI_MIN) * s / MAX_ENTROPY


def texture_coefficients(plane, labels, k: int, m: int = 8) -> TextureMap:
    ent = block_entropy(plane, m)
    lab = np.asarray(labels).reshape(ent.shape)
    if lab.min() < 1 or lab.max() > k:
        raise TextureError("labels must lie in 1..k")
    sbar = np.zeros(k)
    for q in range(1, k + 1):
        members = ent[lab == q]
        if members.size == 0:
            raise TextureError(f"cluster {q} is empty")
        sbar[q - 1] = members.mean()
    xi = entropy_to_xi(sbar)[lab - 1]
    return TextureMap(lab, k, sbar, ent, xi)


def uniform_texture(shape, xi: float = 1.0) -> TextureMap:
    """Flat map, handy for tests and for bypassing texture adaptation."""
    lab = np.ones(shape, dtype=np.int64)
    s = (xi - XI_MIN) / (XI_MAX - XI_MIN) * MAX_ENTROPY
    return TextureMap(lab, 1, np.array([s]), np.full(shape, s), np.full(shape, float(xi)))


def texture_map(plane, m: int = 8, tau: int = 8, seed: int = 0) -> TextureMap:
    feats = block_features(plane, m)
    k, _ = select_k(feats.normalized, tau, seed)
    if k == 1:
        labels = np.ones(len(feats.normalized), dtype=np.int64)
    else:
        labels, _ = kmeans(feats.normalized, k, seed)
    return texture_coefficients(plane, labels.reshape(feats.grid_shape), k, m)
