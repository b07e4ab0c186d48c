"""Quality (PSNR/SSIM), mark robustness (BER/NC) and tamper-localization scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.metrics import structural_similarity

from .image import Image

PEAK = 255.0


class MetricError(ValueError):
    pass


def _samples(x):
    return np.asarray(x.samples if isinstance(x, Image) else x, dtype=np.float64)


def _pair(a, b):
    a, b = _samples(a), _samples(b)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """PSNR in dB over all samples (all channels jointly); inf for identical inputs."""
    e = mse(a, b)
    if e == 0:
        return float("inf")
    return float(10 * np.log10(PEAK**2 / e))


def _luma(x):
    if x.ndim == 3:
        # same weights the YCoCg transform gives Y
        return 0.25 * x[..., 0] + 0.5 * x[..., 1] + 0.25 * x[..., 2]
    return x


def ssim(a, b) -> float:
    """Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03."""
    a, b = _pair(a, b)
    a, b = _luma(a), _luma(b)
    if min(a.shape) < 11:
        raise MetricError("SSIM needs at least 11x11 samples")
    return float(
        structural_similarity(
            a, b, data_range=PEAK, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, K1=0.01, K2=0.03,
        )
    )


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    mse: float

    def as_dict(self):
        return {"psnr": self.psnr, "ssim": self.ssim, "mse": self.mse}


def quality(a, b) -> QualityReport:
    return QualityReport(psnr(a, b), ssim(a, b), mse(a, b))


def _bits(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise MetricError(f"mark shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ber(m1, m2) -> float:
    a, b = _bits(m1, m2)
    return float(np.count_nonzero(a != b) / a.size)


def nc(m1, m2) -> float:
    """Normalized correlation of binary marks; two all-zero marks score 1."""
    a, b = _bits(m1, m2)
    a, b = a.astype(float), b.astype(float)
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if den == 0:
        return 1.0 if not a.any() and not b.any() else 0.0
    return float(np.sum(a * b) / den)


@dataclass(frozen=True)
class Localization:
    tpr: float
    fpr: float
    ac: float

    def as_dict(self):
        return {"tpr": self.tpr, "fpr": self.fpr, "ac": self.ac}


def localization_scores(pred, truth) -> Localization:
    p, t = _bits(pred, truth)
    tp = np.count_nonzero(p & t)
    fn = np.count_nonzero(~p & t)
    fp = np.count_nonzero(p & ~t)
    tn = np.count_nonzero(~p & ~t)
    tpr = tp / (tp + fn) if tp + fn else 1.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return Localization(float(tpr), float(fpr), float((tp + tn) / p.size))
