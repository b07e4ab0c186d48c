"""Test-corpus ingestion: checksummed download from package archives, synthetic fallback.

Classic 512x512 test images are pulled out of source archives published on
the Python package index, which is the one network location that is reliably
reachable from build sandboxes. Every archive and every member is pinned by
SHA-256. Without network access (or with ``offline=True``) a seeded synthetic
stand-in with the same name is generated instead, and the corpus index marks
it as such.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import shutil
import tarfile
import urllib.request
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

log = logging.getLogger(__name__)

CACHE_ENV = "SHEARMARK_CACHE_DIR"
SIZE = 512
INDEX_NAME = "corpus.json"

_PYPI = "https://files.pythonhosted.org/packages/"

ARCHIVES = {
    "skimage-0.10.1": {
        "url": _PYPI + "df/26/e87ebb6c083d8c647478ac2a0e2bef59f8543bd01e35888590a9457d0a5b/scikit-image-0.10.1.tar.gz",
        "sha256": "83a1afcc16df75ff27237f84841a95c8f65c4e19ffd64849faa540aab48a5ab7",
    },
    "opencv-python-3.4.0.14": {
        "url": _PYPI + "44/8b/79ca3638e81a38fd404e24997e09c6e26615b940ab55cf23603b5bc7990f/opencv-python-3.4.0.14.tar.gz",
        "sha256": "414547b0df012a54f43f98ae6abc5ec54ff1cfa7b62461d12153a5bd4c3612a0",
    },
    "sporco-0.2.2.post1": {
        "url": _PYPI + "79/ad/65f4442d9da24e9dcfafedd6305ddf466b10de1c3e6bd5b77963c60cf302/sporco-0.2.2.post1.tar.gz",
        "sha256": "75873d65ed522304d17095d1155a3344301a592ecb0279da72b8fcd27b184886",
    },
    "pywavelets-1.4.1": {
        "url": _PYPI + "6e/d4/008dceeb95fafcf141f39393bdfc10921d0b62a325c2794ac533195a1eb3/PyWavelets-1.4.1.tar.gz",
        "sha256": "6437af3ddf083118c26d8f97ab43b0724b956c9f958e9ea788659f6a2834ba93",
    },
}

_SK = "scikit-image-0.10.1/skimage/data/"
_CV = "opencv-python-3.4.0.14/opencv/samples/data/"
_SP = "sporco-0.2.2.post1/sporco/data/"
_PW = "PyWavelets-1.4.1/pywt/data/"

# name, archive, member, member sha256, color mode
IMAGES = [
    ("lena", "skimage-0.10.1", _SK + "lena.png", "135632b71bd0c009c73d3b4132dbab43fd0923ad1e85102ff6f51452a1d3aec0", "rgb"),
    ("baboon", "opencv-python-3.4.0.14", _CV + "baboon.jpg", "1a1dd18d78eec44420af3b0b7f08ee3d41c982916cae3ce203d7ff35d754cc0f", "rgb"),
    ("fruits", "opencv-python-3.4.0.14", _CV + "fruits.jpg", "9c031d80a1c52da5eca790db896baffec6a7e52bf786cdb7bbfca5c7f880e6a1", "rgb"),
    ("building", "opencv-python-3.4.0.14", _CV + "building.jpg", "742a1baad62ac82e91e718e77eedf7e85c2eddc4badfb8c87c6cbc86c45a8b07", "rgb"),
    ("monarch", "sporco-0.2.2.post1", _SP + "monarch.png", "c2435a5e37c04658824d26124ab27c3943e7b95b0eeeb27effa6439f81ff5ca9", "rgb"),
    ("sail", "sporco-0.2.2.post1", _SP + "sail.png", "7b8a3b23c79bf83b233915e2199c190589c40980d54d20eb3bf446a33c6e0461", "rgb"),
    ("tulips", "sporco-0.2.2.post1", _SP + "tulips.png", "6f7fa671ce446f85c47fcda0ba9658f22b9824baf3c1abfae7051448665c37d1", "rgb"),
    ("kodim23", "sporco-0.2.2.post1", _SP + "kodim23.png", "34d8f029d2eae3ed37b65e2f94fd2c319923ebfae0fa8bff5f001e2565b7d80f", "rgb"),
    ("barbara", "sporco-0.2.2.post1", _SP + "barbara.png", "61ce3bead097f17d7359b5466975b91938f5ba03822c3771707e42891576842b", "gray"),
    ("camera", "skimage-0.10.1", _SK + "camera.png", "361a6d56d22ee52289cd308d5461d090e06a56cb36007d8dfc3226cbe8aaa5db", "gray"),
    ("moon", "skimage-0.10.1", _SK + "moon.png", "78739619d11f7eb9c165bb5d2efd4772cee557812ec847532dbb1d92ef71f577", "gray"),
    ("brick", "skimage-0.10.1", _SK + "brick.png", "71f1912c840a4fb1576e2b7a1c44c542dadcd9c87dff1bbd342c3fa373dee0ba", "gray"),
    ("grass", "skimage-0.10.1", _SK + "grass.png", "ced49494bf777157e75a733d978dd3e54a01251687828eefced312ca7f62ad8e", "gray"),
    ("ascent", "pywavelets-1.4.1", _PW + "ascent.npz", "a6d56bc8e96571d6124f34cedeba49f1d3599507f6c890ad9ba538544454e8f7", "gray"),
    ("aero", "pywavelets-1.4.1", _PW + "aero.npz", "df862635798bac94226b8928f224da8cef8b0d00492c1fdf48fac6dfaf97a94b", "gray"),
]

# the three images named in the desk-scale robustness check
ROBUSTNESS_SET = ("lena", "baboon", "fruits")


class DatasetError(RuntimeError):
    pass


class ChecksumError(DatasetError):
    pass


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    path: str
    source: str  # "real" or "synthetic"
    mode: str


def cache_dir() -> str:
    d = os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "shearmark")
    os.makedirs(d, exist_ok=True)
    return d


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _quarantine(path, root):
    qdir = os.path.join(root, "quarantine")
    os.makedirs(qdir, exist_ok=True)
    dest = os.path.join(qdir, os.path.basename(path))
    shutil.move(path, dest)
    return dest


def fetch_archive(key: str, archives=None, timeout: float = 60.0) -> str:
    """Download (once) and verify an archive; a bad download is quarantined."""
    archives = archives or ARCHIVES
    meta = archives[key]
    root = cache_dir()
    adir = os.path.join(root, "archives")
    os.makedirs(adir, exist_ok=True)
    path = os.path.join(adir, os.path.basename(meta["url"]))
    if os.path.exists(path):
        if sha256_file(path) == meta["sha256"]:
            return path
        dest = _quarantine(path, root)
        raise ChecksumError(f"cached archive {key} failed its checksum; moved to {dest}")
    tmp = path + ".part"
    log.info("downloading %s", meta["url"])
    with urllib.request.urlopen(meta["url"], timeout=timeout) as resp, open(tmp, "wb") as out:
        shutil.copyfileobj(resp, out)
    if sha256_file(tmp) != meta["sha256"]:
        dest = _quarantine(tmp, root)
        raise ChecksumError(f"archive {key} checksum mismatch; moved to {dest}")
    os.replace(tmp, path)
    return path


def _decode(member: str, data: bytes, mode: str) -> np.ndarray:
    if member.endswith(".npz"):
        with np.load(io.BytesIO(data)) as z:
            a = np.asarray(z[z.files[0]])
        im = PILImage.fromarray(a.astype(np.uint8))
    else:
        im = PILImage.open(io.BytesIO(data))
        im.load()
    im = im.convert("L" if mode == "gray" else "RGB")
    return conform(np.asarray(im))


def conform(a: np.ndarray, size: int = SIZE) -> np.ndarray:
    """Center-crop to size x size, or crop to a square and resample when too small."""
    h, w = a.shape[:2]
    if h >= size and w >= size:
        r0, c0 = (h - size) // 2, (w - size) // 2
        return a[r0 : r0 + size, c0 : c0 + size].copy()
    s = min(h, w)
    r0, c0 = (h - s) // 2, (w - s) // 2
    sq = PILImage.fromarray(a[r0 : r0 + s, c0 : c0 + s])
    return np.asarray(sq.resize((size, size), PILImage.LANCZOS))


# -- synthetic stand-ins ---------------------------------------------------------


def synthetic_image(name: str, mode: str = "gray", size: int = SIZE) -> np.ndarray:
    """Seeded textured image: smooth shading, hard-edged shapes and fine texture."""
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    yy, xx = np.mgrid[0:size, 0:size] / size
    channels = 3 if mode == "rgb" else 1
    out = []
    base_shapes = []
    for _ in range(12):
        cy, cx = rng.random(2)
        ry, rx = 0.04 + 0.2 * rng.random(2)
        kind = rng.integers(3)
        if kind == 0:
            m = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        elif kind == 1:
            m = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            m = np.abs((yy - cy) * np.cos(cx * 6) + (xx - cx) * np.sin(cx * 6)) < ry / 4
        base_shapes.append(m)
    tex = ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.0)
    tex2 = ndimage.gaussian_filter(rng.standard_normal((size, size)), 4.0)
    for c in range(channels):
        a, b, ph = rng.random(3)
        img = 90 + 60 * a * np.sin(2 * np.pi * (xx * (1 + 2 * b) + ph)) * np.cos(2 * np.pi * yy * (1 + b))
        for m in base_shapes:
            img = np.where(m, img + rng.uniform(-70, 70), img)
        # texture strength varies across the frame so blocks differ in entropy
        img += (8 + 25 * (xx > 0.5)) * tex / tex.std() + 12 * tex2 / tex2.std()
        out.append(img)
    a = np.stack(out, axis=-1) if channels == 3 else out[0]
    return np.clip(np.round(a), 0, 255).astype(np.uint8)


# -- corpus ----------------------------------------------------------------------


def _write_png(a, path):
    PILImage.fromarray(a).save(path, format="PNG")


def fetch_corpus(out_dir, offline: bool = False, images=None, archives=None) -> list:
    """Materialize the corpus in ``out_dir``; idempotent. Returns CorpusEntry list.

    Raises ChecksumError on a verified mismatch (the file is quarantined);
    download failures fall back to synthetic images.
    """
    os.makedirs(out_dir, exist_ok=True)
    images = images or IMAGES
    archives = archives or ARCHIVES
    index_path = os.path.join(out_dir, INDEX_NAME)
    index = {}
    if os.path.exists(index_path):
        with open(index_path) as fh:
            index = json.load(fh)
    entries = []
    opened = {}
    network_ok = not offline
    try:
        for name, akey, member, msha, mode in images:
            path = os.path.join(out_dir, f"{name}.png")
            prev = index.get(name)
            if os.path.exists(path) and prev and (prev["source"] == "real" or not network_ok):
                entries.append(CorpusEntry(name, path, prev["source"], mode))
                continue
            source = "synthetic"
            arr = None
            if network_ok:
                try:
                    if akey not in opened:
                        opened[akey] = tarfile.open(fetch_archive(akey, archives))
                    data = opened[akey].extractfile(member).read()
                    if sha256_bytes(data) != msha:
                        bad = os.path.join(cache_dir(), f"{name}-{os.path.basename(member)}")
                        with open(bad, "wb") as fh:
                            fh.write(data)
                        dest = _quarantine(bad, cache_dir())
                        raise ChecksumError(f"{name}: member checksum mismatch; moved to {dest}")
                    arr = _decode(member, data, mode)
                    source = "real"
                except ChecksumError:
                    raise
                except (OSError, KeyError, tarfile.TarError) as exc:
                    log.warning("could not fetch %s (%s); using a synthetic stand-in", name, exc)
                    network_ok = False
            if arr is None:
                arr = synthetic_image(name, mode)
            _write_png(arr, path)
            index[name] = {"source": source, "mode": mode, "sha256": sha256_file(path)}
            entries.append(CorpusEntry(name, path, source, mode))
    finally:
        for t in opened.values():
            t.close()
        with open(index_path, "w") as fh:
            json.dump(index, fh, indent=1, sort_keys=True)
    return entries


def list_corpus(corpus_dir) -> list:
    """Images of a corpus directory in a stable order, with provenance if indexed."""
    index = {}
    ip = os.path.join(corpus_dir, INDEX_NAME)
    if os.path.exists(ip):
        with open(ip) as fh:
            index = json.load(fh)
    exts = (".png", ".pgm", ".ppm")
    names = sorted(f for f in os.listdir(corpus_dir) if f.lower().endswith(exts))
    out = []
    for f in names:
        stem = os.path.splitext(f)[0]
        meta = index.get(stem, {})
        out.append(CorpusEntry(stem, os.path.join(corpus_dir, f), meta.get("source", "unknown"), meta.get("mode", "")))
    return out


def load_manifest(path):
    """Read a JSON manifest {"archives": {key: {url, sha256}}, "images": [{name, archive, member, sha256, mode}]}."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest is not valid JSON: {exc}") from exc
    try:
        archives = {k: {"url": v["url"], "sha256": v["sha256"].lower()} for k, v in doc["archives"].items()}
        images = [(e["name"], e["archive"], e["member"], e["sha256"].lower(), e.get("mode", "rgb"))
                  for e in doc["images"]]
    except (KeyError, TypeError, AttributeError) as exc:
        raise DatasetError(f"malformed manifest: {exc}") from exc
    for _, akey, _, _, mode in images:
        if akey not in archives:
            raise DatasetError(f"manifest image refers to unknown archive {akey!r}")
        if mode not in ("rgb", "gray"):
            raise DatasetError(f"mode must be rgb or gray, got {mode!r}")
    return archives, images


def default_manifest() -> dict:
    return {
        "archives": ARCHIVES,
        "images": [{"name": n, "archive": a, "member": m, "sha256": s, "mode": md} for n, a, m, s, md in IMAGES],
    }
