"""Blind extraction: MLP authentication decoding, tamper maps, copyright voting, sidecar I/O."""

from __future__ import annotations

import copy
import hashlib
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .embed import decode_bit, preprocess
from .image import Image, to_blocks
from .marks import KeySet, copy_positions, recover_logo
from .metrics import Localization, localization_scores
from .mlp import MlpModel, TrainConfig, fit, kfold_train
from .texture import MAX_ENTROPY, block_entropy

N_FEATURES = 8


class MetadataError(ValueError):
    pass


def _plane(img):
    if isinstance(img, Image):
        return img.luma()
    return np.asarray(img, dtype=np.float64)


# -- authentication ----------------------------------------------------------


def block_feature_vectors(img, m: int = 8) -> np.ndarray:
    """Per block: six slot DC coefficients, spatial mean, spatial STD; z-scored columns."""
    x = _plane(img)
    state, _ = preprocess(x, m)
    dc = state.dc().reshape(6, -1).T
    b = to_blocks(x, m)
    mean = b.mean(axis=(2, 3)).ravel()
    std = b.std(axis=(2, 3)).ravel()
    F = np.column_stack([dc, mean, std])
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    sd[sd == 0] = 1.0
    return (F - mu) / sd


def train_extractor(img, w_a, m: int = 8, seed: int = 0, cfg: TrainConfig | None = None) -> MlpModel:
    X = block_feature_vectors(img, m)
    y = np.asarray(w_a).ravel()
    if len(y) != len(X):
        raise ValueError(f"mark has {len(y)} bits but the image has {len(X)} blocks")
    model, _ = kfold_train(X, y, cfg, seed)
    return model


def pretrain_extractor(img, w_a, m: int = 8, seed: int = 0, cfg: TrainConfig | None = None) -> MlpModel:
    """One seeded train/validation split instead of k folds; the optimizer's cheap starting model."""
    cfg = cfg or TrainConfig()
    X = block_feature_vectors(img, m)
    y = np.asarray(w_a).ravel()
    if len(y) != len(X):
        raise ValueError(f"mark has {len(y)} bits but the image has {len(X)} blocks")
    order = np.random.default_rng(seed).permutation(len(X))
    n_val = int(round(cfg.val_fraction * len(X)))
    val, tr = order[:n_val], order[n_val:]
    model = MlpModel.init(X.shape[1], cfg.hidden, 2, seed=seed + 1000)
    return fit(model, X[tr], y[tr], X[val], y[val], cfg, seed=seed)


def fine_tune(model: MlpModel, img, w_a, m: int = 8, epochs: int = 20, seed: int = 0,
              cfg: TrainConfig | None = None) -> MlpModel:
    """Continue training a copy of ``model`` on a new (e.g. attacked) image."""
    cfg = cfg or TrainConfig()
    X = block_feature_vectors(img, m)
    y = np.asarray(w_a).ravel()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    n_val = int(round(cfg.val_fraction * len(X)))
    val, tr = order[:n_val], order[n_val:]
    tuned = copy.deepcopy(model)
    return fit(tuned, X[tr], y[tr], X[val], y[val], cfg, seed=seed, max_epochs=epochs)


def extract_auth(model: MlpModel, img, m: int = 8) -> np.ndarray:
    x = _plane(img)
    X = block_feature_vectors(x, m)
    if X.shape[1] != model.n_inputs:
        raise ValueError("feature dimension does not match the model")
    return model.predict(X).reshape(x.shape[0] // m, x.shape[1] // m)


# -- tamper map --------------------------------------------------------------

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class TamperReport:
    raw: np.ndarray  # XOR of extracted and expected marks
    map: np.ndarray  # after the area filter and closing
    scores: Localization | None = None

    def as_dict(self):
        d = {"tampered_blocks": int(self.map.sum()), "raw_mismatches": int(self.raw.sum())}
        if self.scores is not None:
            d.update(self.scores.as_dict())
        return d


def remove_small(mask, min_area: int = 3) -> np.ndarray:
    lab, n = ndimage.label(mask, structure=EIGHT)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(lab.ravel())
    keep = sizes >= min_area
    keep[0] = False
    return keep[lab]


def close_square(mask, size: int = 5) -> np.ndarray:
    # pad so the closing is extensive at the borders too
    pad = size
    p = np.pad(mask.astype(bool), pad)
    c = ndimage.binary_closing(p, structure=np.ones((size, size), dtype=bool))
    return c[pad:-pad, pad:-pad]


def tamper_map(extracted, expected, truth=None, min_area: int = 3, closing: int = 5) -> TamperReport:
    a = np.asarray(extracted).astype(bool)
    b = np.asarray(expected).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    raw = a ^ b
    cleaned = close_square(remove_small(raw, min_area), closing)
    scores = localization_scores(cleaned, truth) if truth is not None else None
    return TamperReport(raw.astype(np.uint8), cleaned.astype(np.uint8), scores)


# -- copyright ---------------------------------------------------------------


@dataclass(frozen=True)
class CopyrightResult:
    logo: np.ndarray  # decrypted logo
    tiled: np.ndarray  # raw per-block bits (four copies)
    voted: np.ndarray  # shuffled logo after the weighted vote
    weights: np.ndarray  # entropy weights P per block


def entropy_weights(img, m: int = 8) -> np.ndarray:
    return 1.0 - block_entropy(_plane(img), m) / MAX_ENTROPY


def weighted_vote(tiled, weights) -> np.ndarray:
    """bit = 1 iff the summed weight of copies voting 1 >= that of copies voting 0."""
    t = np.asarray(tiled).astype(bool)
    w = np.asarray(weights, dtype=np.float64)
    rows, cols = t.shape
    ones = np.zeros((rows // 2, cols // 2))
    zeros = np.zeros_like(ones)
    for rs, cs in copy_positions(rows, cols):
        bits, ww = t[rs, cs], w[rs, cs]
        ones += np.where(bits, ww, 0.0)
        zeros += np.where(bits, 0.0, ww)
    return (ones >= zeros).astype(np.uint8)


def extract_tiled(img, delta_q: float, m: int = 8) -> np.ndarray:
    """Raw dequantized bits, one per block (all four copies, before voting)."""
    if delta_q is None:
        raise MetadataError("delta' is required to dequantize the copyright mark")
    state, _ = preprocess(_plane(img), m)
    return decode_bit(state.ac(), delta_q)


def extract_copyright(img, keys: KeySet, delta_q: float, m: int = 8) -> CopyrightResult:
    x = _plane(img)
    tiled = extract_tiled(x, delta_q, m)
    w = entropy_weights(x, m)
    voted = weighted_vote(tiled, w)
    return CopyrightResult(recover_logo(voted, keys), tiled, voted, w)


# -- sidecar metadata --------------------------------------------------------

SIDECAR_KEYS = ("delta_prime", "delta_dprime", "mode", "block", "image_hash")


def image_hash(img) -> str:
    a = img.to_uint8() if isinstance(img, Image) else np.asarray(img, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(repr(a.shape).encode())
    h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def write_sidecar(path, meta: dict) -> None:
    missing = [k for k in SIDECAR_KEYS if k not in meta]
    if missing:
        raise MetadataError(f"sidecar lacks {missing}")
    with open(path, "w") as fh:
        for k in sorted(meta):
            v = meta[k]
            if isinstance(v, float):
                v = repr(v)
            fh.write(f"{k}={v}\n")


def read_sidecar(path) -> dict:
    if not os.path.exists(path):
        raise MetadataError(f"missing metadata file {path}")
    meta = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MetadataError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    missing = [k for k in SIDECAR_KEYS if k not in meta]
    if missing:
        raise MetadataError(f"{path} lacks {missing}")
    try:
        meta["delta_prime"] = float(meta["delta_prime"])
        meta["delta_dprime"] = float(meta["delta_dprime"])
        meta["block"] = int(meta["block"])
    except ValueError as exc:
        raise MetadataError(f"bad value in {path}: {exc}") from exc
    return meta


def sidecar_path(image_path) -> str:
    return os.fspath(image_path) + ".meta"
