"""Command-line front end.

Subcommands: build, fuse, infer, verify, profile, metrics, bench.  Exit
codes: 0 success, 2 usage error, 3 file/format error, 4 verification
failure.  Everything except bench is deterministic given its seed and
inputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import backbone, metrics, model_io, reparam
from .backbone import FUSED, TRAINING, ModelConfig, VARIANTS
from .bench import bench as run_bench
from .image import load_png, reflect_pad_to, save_png
from .tensor import DTYPES, conv2d

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_VERIFY = 4

MIN_INFER_SIDE = 8


def _config_from_args(args) -> ModelConfig:
    if args.channels:
        stage_channels = tuple(int(c) for c in args.channels.split(","))
    else:
        stage_channels = VARIANTS[args.variant]
    return ModelConfig(stage_channels=stage_channels, scale=args.scale,
                       use_attention=not args.no_attention)


def _add_model_args(p: argparse.ArgumentParser, with_seed: bool = True):
    p.add_argument("--variant", choices=sorted(VARIANTS), default="U",
                   help="preset stage-channel configuration")
    p.add_argument("--channels",
                   help="explicit stage channels, e.g. 64,48,32 (overrides --variant)")
    p.add_argument("--scale", type=int, default=4, choices=(2, 3, 4))
    p.add_argument("--no-attention", action="store_true",
                   help="build without the attention stage (ablation)")
    if with_seed:
        p.add_argument("--seed", type=int, default=0)


def cmd_build(args) -> int:
    cfg = _config_from_args(args)
    m = backbone.build_model(cfg, seed=args.seed, dtype=args.dtype)
    model_io.save(m, args.output)
    print(f"wrote {args.output} ({model_io.parameter_count(m)} params, "
          f"{m.form} form, {m.dtype})", file=sys.stderr)
    return EXIT_OK


def cmd_fuse(args) -> int:
    m = model_io.load(args.input)
    if m.form == FUSED:
        print("error: checkpoint is already fused", file=sys.stderr)
        return EXIT_FILE
    model_io.save(backbone.fuse_model(m), args.output)
    return EXIT_OK


def cmd_infer(args) -> int:
    m = model_io.load(args.model)
    if m.form == TRAINING:
        m = backbone.fuse_model(m)
    img = load_png(args.input, dtype=DTYPES[m.dtype])
    _, h, w = img.shape
    padded = reflect_pad_to(img, MIN_INFER_SIDE, MIN_INFER_SIDE)
    out = backbone.forward_fused(m, padded[None])[0]
    scale = m.config.scale
    out = out[:, :h * scale, :w * scale]
    save_png(out, args.output)
    return EXIT_OK


def _verify_model(m: backbone.SRModel, seed: int, tolerance: float,
                  block_draws: int) -> tuple[bool, list[str]]:
    rng = np.random.default_rng(seed)
    lines = []
    ok = True

    worst_block = 0.0
    for i, blk in enumerate(m.blocks):
        for rep in (blk.rep1, blk.rep2):
            fused = reparam.fuse(rep)
            for _ in range(block_draws):
                x = rng.random((1, rep.c, 16, 16)).astype(rep.dtype)
                err = float(np.abs(reparam.forward_train(x, rep) - conv2d(x, fused)).max())
                worst_block = max(worst_block, err)
    lines.append(f"block fusion: max |train - fused| = {worst_block:.3e}")
    ok &= worst_block <= tolerance

    x = rng.random((1, m.config.in_channels, 32, 32)).astype(DTYPES[m.dtype])
    a = backbone.forward(m, x, schedule="split")
    b = backbone.forward(m, x, schedule="index")
    identical = bool(np.array_equal(a, b))
    lines.append(f"schedule equivalence: bit-identical = {identical}")
    ok &= identical

    fused_m = backbone.fuse_model(m)
    e2e = float(np.abs(backbone.forward_train(m, x)
                       - backbone.forward_fused(fused_m, x)).max())
    lines.append(f"end-to-end fusion: max abs diff = {e2e:.3e}")
    ok &= e2e <= tolerance
    return ok, lines


def cmd_verify(args) -> int:
    m = model_io.load(args.input)
    if m.form != TRAINING:
        print("error: verify needs a training-form checkpoint", file=sys.stderr)
        return EXIT_FILE
    tolerance = args.tolerance
    if tolerance is None:
        tolerance = 1e-10 if m.dtype == "f64" else 1e-4
    ok, lines = _verify_model(m, args.seed, tolerance, args.draws)
    for line in lines:
        print(line)
    print(f"tolerance {tolerance:g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_profile(args) -> int:
    if args.input:
        m = model_io.load(args.input)
    else:
        m = backbone.build_model(_config_from_args(args), seed=0)
        if args.fused:
            m = backbone.fuse_model(m)
    report = metrics.profile(m, args.size, args.size)
    print(report.to_json())
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = load_png(args.reference)
    b = load_png(args.test)
    out = {
        "schema_version": 1,
        "mode": args.mode,
        "psnr_db": metrics.psnr(a, b, mode=args.mode),
        "ssim": metrics.ssim(a, b, mode=args.mode),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.input:
        m = model_io.load(args.input)
    else:
        m = backbone.build_model(_config_from_args(args), seed=args.seed)
        if args.fused:
            m = backbone.fuse_model(m)
    stats = run_bench(m, args.size, args.size, warmup=args.warmup,
                      iters=args.iters, threads=args.threads, seed=args.seed)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pusr",
                                 description="Plain-convolution SR engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write a randomly initialized training checkpoint")
    _add_model_args(p)
    p.add_argument("--dtype", choices=sorted(DTYPES), default="f32")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("fuse", help="collapse a training checkpoint for deployment")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("infer", help="upscale a PNG with a checkpoint")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("verify", help="run the fusion/schedule equivalence suite")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=3,
                   help="random inputs per block-level check")
    p.add_argument("--tolerance", type=float, default=None,
                   help="max allowed abs error (default 1e-4 f32, 1e-10 f64)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("profile", help="params/MACs/activations as JSON")
    _add_model_args(p, with_seed=False)
    p.add_argument("-i", "--input", help="profile a checkpoint instead of a fresh build")
    p.add_argument("--fused", action="store_true", help="profile the fused form")
    p.add_argument("--size", type=int, default=256, help="input side length")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two PNGs as JSON")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--mode", choices=("rgb", "y"), default="rgb")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="forward latency as JSON")
    _add_model_args(p)
    p.add_argument("-i", "--input", help="bench a checkpoint instead of a fresh build")
    p.add_argument("--fused", action="store_true", help="bench the fused form")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (model_io.CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FILE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
