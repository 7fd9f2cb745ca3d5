"""Command-line front end: ``python -m diffsurf <command> ...``.

Exit status is 0 on success, 1 on usage or configuration errors and 2 when
a command fails at run time. Structured output is JSON or CSV on stdout
(or ``--out``); wall-clock timings only ever go to their own file.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import losses as L
from .autograd import GRADCHECK_OPS, gradcheck
from .config import ConfigError, RunConfig, read_config
from .descriptor import build_lut, dense_descriptor_pyramid, dense_descriptors_fast, dense_descriptors_naive
from .detector import default_scales, detector_response, extract_keypoints, keypoints_to_csv
from .image import load_image
from .matching import evaluate_pair
from .tensorfile import read_tensor, write_tensor


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> RunConfig:
    threads = args.threads
    if threads is None and os.environ.get("DSF_THREADS"):
        try:
            threads = int(os.environ["DSF_THREADS"])
        except ValueError as exc:
            raise ConfigError("DSF_THREADS must be an integer") from exc
    overrides = {
        "scales": args.scales,
        "filter_sizes": args.filter_sizes,
        "detection_threshold": args.detection_threshold,
        "ratio_threshold": args.ratio_threshold,
        "ransac_threshold_px": args.ransac_threshold,
        "ransac_confidence": args.ransac_confidence,
        "ransac_max_iters": args.ransac_max_iters,
        "rng_seed": args.seed,
        "min_inliers": args.min_inliers,
        "lambda_rec": args.lambda_rec,
        "lambda_det": args.lambda_det,
        "lambda_desc": args.lambda_desc,
        "lambda_adv": args.lambda_adv,
        "threads": threads,
    }
    return read_config(args.config, overrides)


def _scales(cfg: RunConfig):
    return default_scales(cfg.scales, cfg.filter_sizes)


def _dtype(name):
    return np.float32 if name == "f32" else np.float64


def cmd_detect(args, cfg):
    img = load_image(args.image)
    pyr = detector_response(img, _scales(cfg), threads=cfg.threads)
    # by default skip pixels whose largest filter crosses the image edge
    border = max(s.filter_size for s in pyr.scales) // 2 if args.border is None else args.border
    kps = extract_keypoints(pyr, cfg.detection_threshold, border=border)
    _emit(keypoints_to_csv(kps), args.out)
    if args.det_map:
        write_tensor(args.det_map, pyr.stack().astype(_dtype(args.dtype)))


def cmd_describe(args, cfg):
    img = load_image(args.image)
    scales = _scales(cfg)
    maps = dense_descriptor_pyramid(img, scales, threads=cfg.threads)
    lines = []
    for m in maps:
        path = f"{args.out_prefix}_s{m.scale_index}.dsf"
        write_tensor(path, m.data.astype(_dtype(args.dtype)))
        lines.append(path)
    sys.stdout.write("\n".join(lines) + "\n")


def _draw_matches(img_a, img_b, kps, matches, result, path):
    from PIL import Image, ImageDraw

    a = np.clip(np.asarray(img_a) * 255, 0, 255).astype(np.uint8)
    b = np.clip(np.asarray(img_b) * 255, 0, 255).astype(np.uint8)
    h = max(a.shape[0], b.shape[0])
    canvas = np.zeros((h, a.shape[1] + b.shape[1]), np.uint8)
    canvas[: a.shape[0], : a.shape[1]] = a
    canvas[: b.shape[0], a.shape[1] :] = b
    im = Image.fromarray(canvas).convert("RGB")
    draw = ImageDraw.Draw(im)
    inliers = set(result.inliers) if result is not None else set()
    kps_a, kps_b = kps
    for i, m in enumerate(matches):
        pa, pb = kps_a[m.index_a], kps_b[m.index_b]
        colour = (0, 220, 0) if i in inliers else (220, 0, 0)
        draw.line([(pa.x, pa.y), (pb.x + a.shape[1], pb.y)], fill=colour)
    im.save(path, format="PNG")


def cmd_match(args, cfg):
    img_a, img_b = load_image(args.image_a), load_image(args.image_b)
    report, matches, result, kps = evaluate_pair(img_a, img_b, cfg)
    _emit(_dumps(report.payload()), args.out)
    if args.timings:
        Path(args.timings).write_text(_dumps(report.timings))
    if args.viz:
        _draw_matches(img_a, img_b, kps, matches, result, args.viz)


def _score(path):
    return L.ScoreMap(read_tensor(path))


def cmd_loss(args, cfg):
    w = cfg.loss_weights
    scales = _scales(cfg)
    inputs = args.inputs
    need = {"rec": 2, "det": 2, "desc": 2, "finetune": 2, "disc": 2, "gen": 3, "adv": 1}[args.kind]
    if len(inputs) < need or (args.kind not in ("gen", "adv") and len(inputs) != need):
        raise UsageError(f"loss {args.kind} takes {need} input(s), got {len(inputs)}")
    if args.kind in ("adv", "disc"):
        scores = [_score(p) for p in inputs]
        if args.kind == "adv":
            comps = {"adv": float(sum(L.adv_loss(s) for s in scores))}
            report = L.LossReport(comps, {"adv": w.lambda_adv * comps["adv"]})
        else:
            report = L.LossReport({"disc": L.disc_loss(*scores)}, {})
            report.totals["disc"] = report.components["disc"]
    elif args.kind == "gen":
        a, b = load_image(inputs[0]), load_image(inputs[1])
        scores = [_score(p) for p in inputs[2:]]
        report = L.generator_objective(a, b, scores, w, scales)
    elif args.kind == "finetune":
        report = L.finetune_objective(load_image(inputs[0]), load_image(inputs[1]), w, scales)
    else:
        a, b = load_image(inputs[0]), load_image(inputs[1])
        value = {"rec": lambda: L.rec_loss(a, b),
                 "det": lambda: L.det_loss(a, b, scales),
                 "desc": lambda: L.desc_loss(a, b, scales)}[args.kind]()
        report = L.LossReport({args.kind: value}, {})
    out = report.to_dict()
    out["loss"] = args.kind
    out["weights"] = {"lambda_rec": w.lambda_rec, "lambda_det": w.lambda_det,
                      "lambda_desc": w.lambda_desc, "lambda_adv": w.lambda_adv}
    _emit(_dumps(out), args.out)


def cmd_gradcheck(args, cfg):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    image = load_image(args.image) if args.image else None
    report = gradcheck(args.op, trials=args.trials, seed=cfg.rng_seed, size=args.size,
                       image=image, coords=args.coords)
    _emit(_dumps(report), args.out)
    return 0 if report["passed"] else 2


def cmd_bench(args, cfg):
    if args.image:
        img = load_image(args.image).astype(np.float64)
    else:
        img = np.random.default_rng(cfg.rng_seed).random((args.size, args.size))
    rows = ["scale_index,filter_size,step,height,width,fast_seconds,naive_seconds,speedup"]
    for i, spec in enumerate(_scales(cfg)):
        lut = build_lut(spec)
        t0 = time.perf_counter()
        dense_descriptors_fast(img, spec, lut)
        t1 = time.perf_counter()
        dense_descriptors_naive(img, spec, lut)
        t2 = time.perf_counter()
        fast, naive = t1 - t0, t2 - t1
        rows.append(f"{i},{spec.filter_size},{spec.step},{img.shape[0]},{img.shape[1]},"
                    f"{fast:.6f},{naive:.6f},{naive / fast:.2f}")
    _emit("\n".join(rows) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--scales", type=int)
    g.add_argument("--filter-sizes", type=lambda s: [int(v) for v in s.split(",")])
    g.add_argument("--detection-threshold", "--threshold", type=float)
    g.add_argument("--ratio-threshold", type=float)
    g.add_argument("--ransac-threshold", type=float)
    g.add_argument("--ransac-confidence", type=float)
    g.add_argument("--ransac-max-iters", type=int)
    g.add_argument("--min-inliers", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--lambda-rec", type=float)
    g.add_argument("--lambda-det", type=float)
    g.add_argument("--lambda-desc", type=float)
    g.add_argument("--lambda-adv", type=float)
    g.add_argument("--threads", type=int, help="worker cap (falls back to $DSF_THREADS)")

    parser = _Parser(prog="diffsurf", description="Differentiable dense SURF features.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", parents=[common], help="detect keypoints (CSV)")
    p.add_argument("image")
    p.add_argument("--out")
    p.add_argument("--det-map", help="write the (S, H, W) det maps as a tensor file")
    p.add_argument("--border", type=int, help="edge margin in pixels (default: half the largest filter)")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("describe", parents=[common], help="dense descriptor maps")
    p.add_argument("image")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", parents=[common], help="match and verify an image pair")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--out")
    p.add_argument("--timings", help="write stage timings (JSON) here")
    p.add_argument("--viz", help="write a side-by-side PNG of the matches")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("loss", parents=[common], help="evaluate a training loss")
    p.add_argument("kind", choices=("rec", "det", "desc", "gen", "finetune", "adv", "disc"))
    p.add_argument("inputs", nargs="+", help="images (PNG/PGM) or score maps (tensor files)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--op", choices=GRADCHECK_OPS, default="detector")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--size", type=int)
    p.add_argument("--coords", type=int, default=32)
    p.add_argument("--image")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", parents=[common], help="fast vs naive descriptor timing (CSV)")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--image")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        status = args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
