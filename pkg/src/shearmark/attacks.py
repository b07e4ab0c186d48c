"""Deterministic image attacks for robustness tests and the optimizer's inner loop.

All attacks take and return 8-bit images (float samples in [0, 255]); noise
attacks draw from a generator seeded by the spec, so repeated runs are
bit-identical.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage, signal

from .image import Image, quantize_8bit


class AttackError(ValueError):
    pass


# kind -> {param: (low, high, default)}; bounds follow the paper's sweep lists,
# widened only where the paper itself uses a value outside them (sharpen 4).
PARAM_RANGES = {
    "salt_pepper": {"density": (0.01, 0.10, 0.01)},
    "speckle": {"var": (0.01, 0.10, 0.01)},
    "gaussian_noise": {"var": (0.001, 0.01, 0.001)},
    "jpeg": {"quality": (1, 100, 70)},
    "lighten": {"step": (1, 100, 30)},
    "darken": {"step": (1, 100, 50)},
    "sharpen": {"amount": (0.2, 4.0, 4.0), "radius": (0.5, 3.0, 1.0)},
    "gaussian_filter": {"sigma": (0.1, 1.0, 0.5)},
    "average": {"size": (3, 3, 3)},
    "median": {"size": (3, 3, 3)},
    "resize": {"factor": (0.25, 4.0, 0.5)},
    "histeq": {},
    "lsb": {"bits": (1, 4, 2)},
    "wiener": {"size": (2, 7, 4)},
    "crop": {"fraction": (0.01, 0.9, 0.25)},
}

STOCHASTIC = {"salt_pepper", "speckle", "gaussian_noise", "lsb"}
INTEGER_PARAMS = {"quality", "size", "bits"}


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PARAM_RANGES:
            raise AttackError(f"unknown attack {self.kind!r}")
        ranges = PARAM_RANGES[self.kind]
        full = {}
        for name, value in self.params.items():
            if name not in ranges:
                raise AttackError(f"{self.kind}: unknown parameter {name!r}")
        for name, (lo, hi, default) in ranges.items():
            v = self.params.get(name, default)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                raise AttackError(f"{self.kind}.{name} must be numeric")
            if not lo <= v <= hi:
                raise AttackError(f"{self.kind}.{name}={v} outside the allowed range [{lo}, {hi}]")
            full[name] = int(v) if name in INTEGER_PARAMS else float(v)
        object.__setattr__(self, "params", full)

    @property
    def name(self) -> str:
        """Filename-safe tag encoding kind, params and (for noise) seed."""
        parts = [self.kind] + [f"{k}{_fmt(v)}" for k, v in sorted(self.params.items())]
        if self.kind in STOCHASTIC:
            parts.append(f"seed{self.seed}")
        return "_".join(parts)

    def as_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


def _fmt(v):
    s = f"{v:g}" if isinstance(v, float) else str(v)
    return s.replace(".", "p").replace("-", "m")


def _u8(x):
    return quantize_8bit(x).astype(np.float64)


def _per_channel(x, fn):
    if x.ndim == 2:
        return fn(x)
    return np.stack([fn(x[..., c]) for c in range(x.shape[2])], axis=-1)


def _salt_pepper(x, density, rng):
    out = x.copy()
    u = rng.random(x.shape)
    out[u < density / 2] = 0
    out[(u >= density / 2) & (u < density)] = 255
    return out


def _speckle(x, var, rng):
    a = np.sqrt(3 * var)  # zero-mean uniform noise with variance var
    n = rng.uniform(-a, a, x.shape)
    return _u8(x + x * n)


def _gaussian_noise(x, var, rng):
    # variance is on the [0, 1] intensity scale
    n = rng.normal(0.0, np.sqrt(var), x.shape)
    return _u8((x / 255 + n) * 255)


def _jpeg(x, quality):
    im = PILImage.fromarray(quantize_8bit(x))
    buf = io.BytesIO()
    im.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with PILImage.open(buf) as dec:
        return np.asarray(dec, dtype=np.float64).copy()


def _sharpen(x, amount, radius):
    def one(p):
        blur = ndimage.gaussian_filter(p, radius, mode="nearest", truncate=2.0)
        return p + amount * (p - blur)

    return _u8(_per_channel(x, one))


def _gaussian_filter(x, sigma):
    return _u8(_per_channel(x, lambda p: ndimage.gaussian_filter(p, sigma, mode="nearest", radius=1)))


def _resize(x, factor):
    rows, cols = x.shape[:2]
    r2, c2 = max(1, int(round(rows * factor))), max(1, int(round(cols * factor)))

    def one(p):
        im = PILImage.fromarray(p.astype(np.float32), mode="F")
        small = im.resize((c2, r2), PILImage.BILINEAR)
        back = small.resize((cols, rows), PILImage.BILINEAR)
        return np.asarray(back, dtype=np.float64)

    return _u8(_per_channel(x, one))


def _histeq(x):
    def one(p):
        v = quantize_8bit(p)
        hist = np.bincount(v.ravel(), minlength=256)
        cdf = np.cumsum(hist)
        cmin = cdf[np.nonzero(hist)[0][0]]
        if cdf[-1] == cmin:  # single gray level: nothing to spread
            return v.astype(np.float64)
        lut = np.floor((cdf - cmin) / (cdf[-1] - cmin) * 255 + 0.5)
        return lut[v]

    return _per_channel(x, one)


def _lsb(x, bits, rng):
    v = quantize_8bit(x).astype(np.int64)
    mask = (1 << bits) - 1
    noise = rng.integers(0, mask + 1, size=v.shape)
    return ((v & ~mask) | noise).astype(np.float64)


def _wiener(x, size):
    # local mean/variance filter; noise power = mean local variance.
    # Flat windows divide 0/0 inside scipy, which then falls back to the local mean.
    with np.errstate(divide="ignore", invalid="ignore"):
        return _u8(_per_channel(x, lambda p: signal.wiener(p, (size, size))))


def _crop(x, fraction):
    """Blank the border so only a centered window of area (1 - fraction) survives."""
    rows, cols = x.shape[:2]
    keep = np.sqrt(1 - fraction)
    kr, kc = int(round(rows * keep)), int(round(cols * keep))
    r0, c0 = (rows - kr) // 2, (cols - kc) // 2
    out = np.zeros_like(x)
    out[r0 : r0 + kr, c0 : c0 + kc] = x[r0 : r0 + kr, c0 : c0 + kc]
    return out


def apply_attack(img, spec: AttackSpec) -> Image:
    x = np.array(img.samples if isinstance(img, Image) else img, dtype=np.float64)
    p = spec.params
    rng = np.random.default_rng(spec.seed)
    k = spec.kind
    if k == "salt_pepper":
        y = _salt_pepper(x, p["density"], rng)
    elif k == "speckle":
        y = _speckle(x, p["var"], rng)
    elif k == "gaussian_noise":
        y = _gaussian_noise(x, p["var"], rng)
    elif k == "jpeg":
        y = _jpeg(x, p["quality"])
    elif k == "lighten":
        y = _u8(x + p["step"])
    elif k == "darken":
        y = _u8(x - p["step"])
    elif k == "sharpen":
        y = _sharpen(x, p["amount"], p["radius"])
    elif k == "gaussian_filter":
        y = _gaussian_filter(x, p["sigma"])
    elif k == "average":
        y = _u8(_per_channel(x, lambda q: ndimage.uniform_filter(q, p["size"], mode="nearest")))
    elif k == "median":
        y = _per_channel(x, lambda q: ndimage.median_filter(q, p["size"], mode="nearest"))
    elif k == "resize":
        y = _resize(x, p["factor"])
    elif k == "histeq":
        y = _histeq(x)
    elif k == "lsb":
        y = _lsb(x, p["bits"], rng)
    elif k == "wiener":
        y = _wiener(x, p["size"])
    elif k == "crop":
        y = _crop(x, p["fraction"])
    else:  # pragma: no cover - guarded by AttackSpec
        raise AttackError(k)
    return Image(np.clip(y, 0, 255))


def apply_chain(img, specs) -> Image:
    out = img
    for s in specs:
        out = apply_attack(out, s)
    return out


def optimization_attack_set():
    """The five deterministic attacks averaged inside the optimizer's objectives."""
    return [
        AttackSpec("sharpen", {"radius": 1.0, "amount": 4.0}),
        AttackSpec("wiener", {"size": 4}),
        AttackSpec("resize", {"factor": 0.5}),
        AttackSpec("darken", {"step": 50}),
        AttackSpec("histeq"),
    ]


def standard_suite():
    """One representative setting of each attack in the robustness list."""
    return [
        AttackSpec("salt_pepper", {"density": 0.01}, seed=1),
        AttackSpec("speckle", {"var": 0.01}, seed=2),
        AttackSpec("gaussian_noise", {"var": 0.001}, seed=3),
        AttackSpec("jpeg", {"quality": 70}),
        AttackSpec("lighten", {"step": 30}),
        AttackSpec("darken", {"step": 50}),
        AttackSpec("sharpen", {"amount": 1.0}),
        AttackSpec("gaussian_filter", {"sigma": 0.5}),
        AttackSpec("average"),
        AttackSpec("median"),
        AttackSpec("resize", {"factor": 0.5}),
        AttackSpec("histeq"),
        AttackSpec("lsb", {"bits": 2}, seed=4),
        AttackSpec("wiener", {"size": 4}),
    ]


# strength grids for the robustness curves (one CSV column per value)
STRENGTH_GRID = {
    "salt_pepper": ("density", [i / 100 for i in range(1, 11)]),
    "speckle": ("var", [i / 100 for i in range(1, 11)]),
    "gaussian_noise": ("var", [i / 1000 for i in range(1, 11)]),
    "jpeg": ("quality", [10 * i for i in range(1, 11)]),
    "lighten": ("step", [10 * i for i in range(1, 11)]),
    "darken": ("step", [10 * i for i in range(1, 11)]),
    "sharpen": ("amount", [round(0.2 * i, 1) for i in range(1, 11)]),
    "gaussian_filter": ("sigma", [i / 10 for i in range(1, 11)]),
}


def load_batch(path):
    """Read an attack batch: a JSON list of {kind, params, seed} objects.

    Returns (specs, errors) so one bad entry does not sink the rest.
    """
    with open(path) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AttackError(f"batch file is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise AttackError("batch file must hold a list of attack entries")
    specs, errors = [], []
    for i, e in enumerate(entries):
        try:
            if not isinstance(e, dict) or "kind" not in e:
                raise AttackError("entry needs a 'kind'")
            specs.append(AttackSpec(e["kind"], dict(e.get("params", {})), int(e.get("seed", 0))))
        except (AttackError, TypeError, ValueError) as exc:
            errors.append((i, str(exc)))
    return specs, errors
