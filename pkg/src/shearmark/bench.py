"""Corpus benchmark: quality, per-attack robustness and strength curves.

Outputs (all deterministic given the config):
  report.json   per-image and mean quality, per-attack NC/BER, config, seeds
  quality.csv   one row per image
  attacks.csv   one row per image x suite attack
  curves.csv    one row per image x attack kind x strength
  images/       watermarked images
Wall-clock timings go to timings.json, which is outside the determinism
contract.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .attacks import STRENGTH_GRID, AttackSpec, apply_attack, standard_suite
from .dataset import list_corpus
from .embed import DEFAULT_THRESHOLDS, ThresholdPair, embed_all
from .extract import extract_auth, extract_copyright, fine_tune, train_extractor
from .image import load_image, save_image
from .marks import KeySet, default_logo, fit_logo, mark_shapes, prepare_marks
from .metrics import ber, nc, psnr, ssim
from .texture import texture_map

DEFAULT_KEYS = KeySet(0x5EED0001, 0x5EED0002, 0x5EED0003)


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    mode: str = "dual"
    block: int = 8
    keys: KeySet = DEFAULT_KEYS
    thresholds: ThresholdPair = DEFAULT_THRESHOLDS
    seed: int = 0
    suite: bool = True
    curves: bool = True
    workers: int = 1
    logo: np.ndarray | None = field(default=None, compare=False)

    def as_dict(self):
        return {
            "mode": self.mode,
            "block": self.block,
            "keys_fingerprint": self.keys.fingerprint(),
            "thresholds": asdict(self.thresholds),
            "seed": self.seed,
            "suite": self.suite,
            "curves": self.curves,
            "logo": "default" if self.logo is None else "custom",
        }


def _num(v):
    """JSON-safe float: infinities become strings."""
    v = float(v)
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return round(v, 6)


def curve_specs():
    out = []
    for kind, (param, values) in STRENGTH_GRID.items():
        for i, v in enumerate(values):
            out.append((kind, param, v, AttackSpec(kind, {param: v}, seed=100 + i)))
    return out


def _robustness(att, marks, model, cfg, seed):
    rec = {}
    if cfg.mode != "auth":
        cr = extract_copyright(att, cfg.keys, cfg.thresholds.delta_q, cfg.block)
        rec["copyright_nc"] = _num(nc(cr.logo, marks.logo))
        rec["copyright_ber"] = _num(ber(cr.logo, marks.logo))
    if cfg.mode != "copyright":
        tuned = fine_tune(model, att, marks.auth, cfg.block, seed=seed)
        wa = extract_auth(tuned, att, cfg.block)
        rec["auth_nc"] = _num(nc(wa, marks.auth))
        rec["auth_ber"] = _num(ber(wa, marks.auth))
    return rec


def bench_image(entry, cfg: BenchConfig, out_dir):
    """Full pipeline for one image. Returns (record, attack rows, curve rows, seconds)."""
    t0 = time.perf_counter()
    img = load_image(entry.path)
    rows, cols = img.rows, img.cols
    logo_shape, _ = mark_shapes(rows, cols, cfg.block)
    logo = default_logo(*logo_shape) if cfg.logo is None else fit_logo(cfg.logo, logo_shape)
    marks = prepare_marks(logo, cfg.keys, rows, cols, cfg.block)
    tm = texture_map(img.luma(), cfg.block, seed=cfg.seed)
    res = embed_all(img, marks, tm, cfg.thresholds, cfg.mode, cfg.block)
    wm = res.image
    save_image(wm, os.path.join(out_dir, "images", f"{entry.name}.png"))
    rec = {
        "name": entry.name,
        "source": entry.source,
        "shape": list(img.shape),
        "psnr": _num(psnr(img, wm)),
        "ssim": _num(ssim(img, wm)),
        "clusters": tm.k,
    }
    model = None
    if cfg.mode != "copyright":
        model = train_extractor(wm, marks.auth, cfg.block, seed=cfg.seed)
        wa = extract_auth(model, wm, cfg.block)
        rec["clean_auth_ber"] = _num(ber(wa, marks.auth))
    if cfg.mode != "auth":
        cr = extract_copyright(wm, cfg.keys, cfg.thresholds.delta_q, cfg.block)
        rec["clean_copyright_ber"] = _num(ber(cr.logo, marks.logo))
    attack_rows, curve_rows = [], []
    if cfg.suite:
        rec["attacks"] = {}
        for spec in standard_suite():
            r = _robustness(apply_attack(wm, spec), marks, model, cfg, cfg.seed)
            rec["attacks"][spec.name] = r
            attack_rows.append({"image": entry.name, "attack": spec.name, **r})
    if cfg.curves:
        for kind, param, v, spec in curve_specs():
            r = _robustness(apply_attack(wm, spec), marks, model, cfg, cfg.seed)
            curve_rows.append({"image": entry.name, "attack": kind, "param": param, "strength": v, **r})
    return rec, attack_rows, curve_rows, time.perf_counter() - t0


def _bench_job(args):
    return bench_image(*args)


def _means(records, key):
    vals = [r[key] for r in records if isinstance(r.get(key), float)]
    return _num(np.mean(vals)) if vals else None


def _write_csv(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def run_bench(corpus_dir, out_dir, cfg: BenchConfig | None = None) -> dict:
    cfg = cfg or BenchConfig()
    entries = list_corpus(corpus_dir)
    if not entries:
        raise BenchError(f"no images in {corpus_dir}")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    jobs = [(e, cfg, out_dir) for e in entries]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_bench_job, jobs))
    else:
        results = [_bench_job(j) for j in jobs]

    records = [r[0] for r in results]
    attack_rows = [row for r in results for row in r[1]]
    curve_rows = [row for r in results for row in r[2]]
    means = {}
    for label, subset in (("all", records), ("real", [r for r in records if r["source"] == "real"]),
                          ("synthetic", [r for r in records if r["source"] == "synthetic"])):
        if subset:
            means[label] = {"count": len(subset), "psnr": _means(subset, "psnr"), "ssim": _means(subset, "ssim")}
    report = {
        "tool": "shearmark",
        "version": __version__,
        "config": cfg.as_dict(),
        "corpus": os.path.basename(os.path.normpath(corpus_dir)),
        "images": records,
        "mean": means,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    metric_cols = [c for c in ("copyright_nc", "copyright_ber", "auth_nc", "auth_ber")
                   if (c.startswith("copyright") and cfg.mode != "auth") or (c.startswith("auth") and cfg.mode != "copyright")]
    _write_csv(os.path.join(out_dir, "quality.csv"), records, ["name", "source", "psnr", "ssim"])
    if cfg.suite:
        _write_csv(os.path.join(out_dir, "attacks.csv"), attack_rows, ["image", "attack", *metric_cols])
    if cfg.curves:
        _write_csv(os.path.join(out_dir, "curves.csv"), curve_rows, ["image", "attack", "param", "strength", *metric_cols])
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump({r[0]["name"]: round(r[3], 3) for r in results}, fh, indent=2, sort_keys=True)
    return report
