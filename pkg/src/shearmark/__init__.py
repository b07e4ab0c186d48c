"""Blind dual watermarking (copyright logo + semi-fragile authentication mark) in the shearlet domain."""

__version__ = "0.1.0"

from .embed import DEFAULT_THRESHOLDS, ThresholdPair, embed_all  # noqa: E402
from .extract import extract_auth, extract_copyright, tamper_map, train_extractor  # noqa: E402
from .image import Image, load_image, save_image  # noqa: E402
from .marks import KeySet, MarkSet, prepare_marks  # noqa: E402
from .metrics import ber, nc, psnr, ssim  # noqa: E402

__all__ = [
    "DEFAULT_THRESHOLDS",
    "Image",
    "KeySet",
    "MarkSet",
    "ThresholdPair",
    "ber",
    "embed_all",
    "extract_auth",
    "extract_copyright",
    "load_image",
    "nc",
    "prepare_marks",
    "psnr",
    "save_image",
    "ssim",
    "tamper_map",
    "train_extractor",
]
