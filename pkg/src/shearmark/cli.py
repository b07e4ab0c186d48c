"""Command-line interface: embed, verify, attack, optimize, bench, fetch-dataset.

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 missing metadata.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .attacks import AttackError, apply_attack, load_batch, standard_suite
from .bench import DEFAULT_KEYS, BenchConfig, run_bench
from .dataset import ChecksumError, DatasetError, fetch_corpus, load_manifest
from .embed import DEFAULT_THRESHOLDS, MODES, ThresholdPair, embed_all
from .extract import (MetadataError, extract_auth, extract_copyright, image_hash, read_sidecar,
                      sidecar_path, tamper_map, train_extractor, write_sidecar)
from .image import load_image, save_image
from .marks import KeySet, auth_mark, fit_logo, mark_shapes, prepare_marks
from .metrics import ber, mse, nc, psnr, ssim
from .optimize import OptimizerConfig, nsga2_run, select_operating_point
from .texture import texture_map

log = logging.getLogger("shearmark")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_METADATA = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# -- helpers ------------------------------------------------------------------


def _num(v):
    v = float(v)
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return round(v, 6)


def _dump(obj, path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _keys(args) -> KeySet:
    return KeySet.parse(args.keys) if args.keys else DEFAULT_KEYS


def _thresholds(args) -> ThresholdPair:
    dq = DEFAULT_THRESHOLDS.delta_q if args.delta_prime is None else args.delta_prime
    dc = DEFAULT_THRESHOLDS.delta_c if args.delta_dprime is None else args.delta_dprime
    return ThresholdPair(float(dq), float(dc))


def _load_logo(path, rows, cols, block):
    shape, _ = mark_shapes(rows, cols, block)
    return fit_logo(load_image(path).samples, shape)


def _apply_config(args, parser):
    """Fill options the user did not pass from a JSON config file."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    known = vars(args)
    for k, v in cfg.items():
        key = k.replace("-", "_")
        if key not in known:
            raise UsageError(f"unknown config key {k!r}")
        if known[key] is None or known[key] == parser.get_default(key):
            setattr(args, key, v)
    return args


def _marks_for(img, args, keys, need_logo):
    rows, cols = img.rows, img.cols
    logo_shape, _ = mark_shapes(rows, cols, args.block)
    if need_logo:
        if not args.logo:
            raise UsageError(f"mode {args.mode!r} needs a logo (--logo)")
        logo = _load_logo(args.logo, rows, cols, args.block)
    else:
        logo = np.zeros(logo_shape, dtype=np.uint8)
    return prepare_marks(logo, keys, rows, cols, args.block)


# -- commands -----------------------------------------------------------------


def cmd_embed(args) -> int:
    t0 = time.perf_counter()
    if args.mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    img = load_image(args.image)
    keys = _keys(args)
    marks = _marks_for(img, args, keys, args.mode != "auth")
    tm = texture_map(img.luma(), args.block, seed=args.seed)
    out = args.output
    report = {"tool": "shearmark", "version": __version__, "command": "embed"}
    if args.optimize:
        cfg = OptimizerConfig(population=args.population, generations=args.generations,
                              tournament=min(5, args.population))
        run = nsga2_run(img, marks, tm, cfg, seed=args.seed, m=args.block)
        thr, feasible = select_operating_point(run.front, cfg.cap)
        trace_path = os.path.splitext(out)[0] + ".trace.jsonl"
        run.write_trace(trace_path)
        source = {"kind": "optimize", "population": cfg.population, "generations": cfg.generations,
                  "feasible": feasible, "trace": os.path.basename(trace_path)}
    else:
        thr = _thresholds(args)
        source = {"kind": "fixed"}
    res = embed_all(img, marks, tm, thr, args.mode, args.block)
    save_image(res.image, out)
    meta = {
        "delta_prime": thr.delta_q,
        "delta_dprime": thr.delta_c,
        "mode": args.mode,
        "block": args.block,
        "image_hash": image_hash(res.image),
        "keys_fingerprint": keys.fingerprint(),
        "seed": args.seed,
    }
    write_sidecar(sidecar_path(out), meta)
    report["config"] = {
        "input": os.path.basename(args.image),
        "output": os.path.basename(out),
        "mode": args.mode,
        "block": args.block,
        "seed": args.seed,
        "keys_fingerprint": keys.fingerprint(),
        "threshold_source": source,
    }
    report["quality"] = {"psnr": _num(psnr(img, res.image)), "ssim": _num(ssim(img, res.image)),
                         "mse": _num(mse(img, res.image))}
    report["texture"] = {"clusters": res.texture.k,
                         "xi": [_num(v) for v in sorted(set(np.round(res.texture.xi.ravel(), 6)))]}
    if args.mode != "auth":
        cr = extract_copyright(res.image, keys, thr.delta_q, args.block)
        report["copyright"] = {"delta_prime": thr.delta_q, "logo_shape": list(marks.logo.shape),
                               "roundtrip_ber": _num(ber(cr.logo, marks.logo))}
    if args.mode != "copyright":
        report["auth"] = {"delta_dprime": thr.delta_c, "mark_shape": list(marks.auth.shape),
                          "carrier_violations": res.info.auth_violations}
    report["runtime_s"] = round(time.perf_counter() - t0, 3)
    _dump(report, args.report or os.path.splitext(out)[0] + ".json")
    print(f"wrote {out} (PSNR {report['quality']['psnr']} dB, SSIM {report['quality']['ssim']})")
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    meta_path = args.meta or sidecar_path(args.image)
    meta = read_sidecar(meta_path)
    img = load_image(args.image)
    keys = _keys(args)
    if "keys_fingerprint" in meta and meta["keys_fingerprint"] != keys.fingerprint():
        raise UsageError("keys do not match the ones used at embedding time")
    m = meta["block"]
    mode = meta["mode"]
    if mode not in MODES:
        raise MetadataError(f"bad mode {mode!r} in {meta_path}")
    os.makedirs(args.output, exist_ok=True)
    seed = int(meta.get("seed", 0)) if args.seed is None else args.seed
    report = {"tool": "shearmark", "version": __version__, "command": "verify",
              "config": {"input": os.path.basename(args.image), "mode": mode, "block": m, "seed": seed,
                         "delta_prime": meta["delta_prime"], "delta_dprime": meta["delta_dprime"],
                         "keys_fingerprint": keys.fingerprint()},
              "unchanged": image_hash(img) == meta["image_hash"]}
    if mode != "auth":
        cr = extract_copyright(img, keys, meta["delta_prime"], m)
        save_image(cr.logo * 255, os.path.join(args.output, "logo.png"))
        rec = {"logo_shape": list(cr.logo.shape)}
        if args.logo:
            ref = _load_logo(args.logo, img.rows, img.cols, m)
            rec.update(ber=_num(ber(cr.logo, ref)), nc=_num(nc(cr.logo, ref)))
        report["copyright"] = rec
    if mode != "copyright":
        expected = auth_mark(keys, img.rows, img.cols, m)
        model = train_extractor(img, expected, m, seed=seed)
        got = extract_auth(model, img, m)
        truth = None
        if args.truth:
            t = load_image(args.truth).samples
            t = t.mean(axis=2) if t.ndim == 3 else t
            if t.shape == (img.rows, img.cols):
                # pixel mask -> block mask: a block counts when at least half of it changed
                t = (t > 127).reshape(img.rows // m, m, img.cols // m, m).mean(axis=(1, 3)) >= 0.5
            elif t.shape != expected.shape:
                raise UsageError(f"truth mask must be {img.rows}x{img.cols} pixels or {expected.shape} blocks")
            truth = t > 0.5 if t.dtype != bool else t
        rep = tamper_map(got, expected, truth)
        tm_img = np.kron(rep.map, np.ones((m, m), dtype=np.uint8)) * 255
        save_image(tm_img, os.path.join(args.output, "tamper.png"))
        report["auth"] = {"ber": _num(ber(got, expected)), "nc": _num(nc(got, expected)),
                          **{k: (_num(v) if isinstance(v, float) else v) for k, v in rep.as_dict().items()}}
    report["runtime_s"] = round(time.perf_counter() - t0, 3)
    _dump(report, os.path.join(args.output, "report.json"))
    print(json.dumps({k: report[k] for k in ("copyright", "auth") if k in report}, sort_keys=True))
    return EXIT_OK


def cmd_attack(args) -> int:
    img = load_image(args.image)
    if args.batch:
        specs, errors = load_batch(args.batch)
    else:
        specs, errors = standard_suite(), []
    os.makedirs(args.output, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    written = []
    for spec in specs:
        path = os.path.join(args.output, f"{stem}__{spec.name}.png")
        save_image(apply_attack(img, spec), path)
        written.append({"file": os.path.basename(path), **spec.as_dict()})
    for i, msg in errors:
        print(f"rejected entry {i}: {msg}", file=sys.stderr)
    _dump({"tool": "shearmark", "version": __version__, "command": "attack", "input": os.path.basename(args.image),
           "outputs": written, "rejected": [{"index": i, "error": e} for i, e in errors]},
          os.path.join(args.output, "attacks.json"))
    print(f"wrote {len(written)} attacked images to {args.output}")
    return EXIT_INPUT if errors else EXIT_OK


def cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    img = load_image(args.image)
    keys = _keys(args)
    args.mode = "dual"
    marks = _marks_for(img, args, keys, True)
    tm = texture_map(img.luma(), args.block, seed=args.seed)
    cfg = OptimizerConfig(population=args.population, generations=args.generations, workers=args.workers,
                          tournament=min(5, args.population))
    run = nsga2_run(img, marks, tm, cfg, seed=args.seed, m=args.block)
    thr, feasible = select_operating_point(run.front, cfg.cap)
    os.makedirs(args.output, exist_ok=True)
    run.write_trace(os.path.join(args.output, "trace.jsonl"))
    _dump({
        "tool": "shearmark", "version": __version__, "command": "optimize",
        "config": {"input": os.path.basename(args.image), "block": args.block, "seed": args.seed,
                   "population": cfg.population, "generations": cfg.generations,
                   "keys_fingerprint": keys.fingerprint()},
        "delta_prime": thr.delta_q, "delta_dprime": thr.delta_c, "feasible": feasible,
        "front": [p.as_dict() for p in run.front],
        "runtime_s": round(time.perf_counter() - t0, 3),
    }, os.path.join(args.output, "thresholds.json"))
    print(f"delta'={thr.delta_q} delta''={thr.delta_c} feasible={feasible}")
    return EXIT_OK


def cmd_bench(args) -> int:
    logo = load_image(args.logo).samples if args.logo else None
    cfg = BenchConfig(mode=args.mode, block=args.block, keys=_keys(args), thresholds=_thresholds(args),
                      seed=args.seed, suite=not args.no_suite, curves=not args.no_curves,
                      workers=args.workers, logo=logo)
    if not os.path.isdir(args.corpus):
        raise UsageError(f"no such corpus directory: {args.corpus}")
    report = run_bench(args.corpus, args.output, cfg)
    for label, m in report["mean"].items():
        print(f"{label}: {m['count']} images, mean PSNR {m['psnr']} dB, mean SSIM {m['ssim']}")
    return EXIT_OK


def cmd_fetch_dataset(args) -> int:
    archives = images = None
    if args.manifest:
        archives, images = load_manifest(args.manifest)
    entries = fetch_corpus(args.output, offline=args.offline, images=images, archives=archives)
    real = sum(e.source == "real" for e in entries)
    print(f"{len(entries)} images in {args.output} ({real} real, {len(entries) - real} synthetic)")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shearmark", description="Blind dual image watermarking toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, thresholds=True):
        sp.add_argument("--keys", help="three keys, hex (0x..) or decimal, comma separated")
        sp.add_argument("--block", type=int, default=8, help="block side (default 8)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="JSON file with default values for these options")
        if thresholds:
            sp.add_argument("--delta-prime", type=float, help="copyright quantization step in [30, 50]")
            sp.add_argument("--delta-dprime", type=float, help="authentication strength in [0, 2]")

    e = sub.add_parser("embed", help="watermark an image")
    e.add_argument("image")
    e.add_argument("-o", "--output", required=True, help="watermarked image (.png/.pgm/.ppm)")
    e.add_argument("--mode", default="dual", choices=MODES)
    e.add_argument("--logo", help="binary logo image (required unless --mode auth)")
    e.add_argument("--report", help="report path (default: <output>.json)")
    e.add_argument("--optimize", action="store_true", help="choose thresholds with NSGA-II")
    e.add_argument("--population", type=int, default=50)
    e.add_argument("--generations", type=int, default=100)
    common(e)
    e.set_defaults(func=cmd_embed)

    v = sub.add_parser("verify", help="extract marks and localize tampering")
    v.add_argument("image")
    v.add_argument("-o", "--output", required=True, help="output directory")
    v.add_argument("--meta", help="sidecar metadata (default: <image>.meta)")
    v.add_argument("--logo", help="original logo, to report BER/NC")
    v.add_argument("--truth", help="ground-truth tamper mask (pixel or block resolution)")
    v.add_argument("--keys")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--config")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("attack", help="apply an attack batch")
    a.add_argument("image")
    a.add_argument("-o", "--output", required=True, help="output directory")
    a.add_argument("--batch", help="JSON list of {kind, params, seed}; default: the 14-attack suite")
    a.set_defaults(func=cmd_attack)

    o = sub.add_parser("optimize", help="tune (delta', delta'') for one image")
    o.add_argument("image")
    o.add_argument("-o", "--output", required=True, help="output directory")
    o.add_argument("--logo", required=True)
    o.add_argument("--population", type=int, default=50)
    o.add_argument("--generations", type=int, default=100)
    o.add_argument("--workers", type=int, default=1)
    common(o, thresholds=False)
    o.set_defaults(func=cmd_optimize)

    b = sub.add_parser("bench", help="benchmark a corpus directory")
    b.add_argument("corpus")
    b.add_argument("-o", "--output", required=True, help="output directory")
    b.add_argument("--mode", default="dual", choices=MODES)
    b.add_argument("--logo", help="logo image (default: built-in test logo)")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--no-suite", action="store_true", help="skip the per-attack suite")
    b.add_argument("--no-curves", action="store_true", help="skip the strength curves")
    common(b)
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fetch-dataset", help="download and verify the test corpus")
    f.add_argument("-o", "--output", required=True, help="corpus directory")
    f.add_argument("--manifest", help="JSON manifest (default: built-in)")
    f.add_argument("--offline", action="store_true", help="generate synthetic stand-ins only")
    f.set_defaults(func=cmd_fetch_dataset)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(args, sub)
        return args.func(args)
    except MetadataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METADATA
    except ChecksumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, AttackError, DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
