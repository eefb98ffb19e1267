"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import statistics
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import numpy as np

from .complexity import model_complexity
from .config import ConfigError, ModelConfig
from .dynamic_conv import complexity_report
from .fog import FogParams, constant_depth, load_depth, synthesize_fog
from .imageio import ImageFormatError, read_rgb, write_gray, write_mask, write_rgb
from .metrics import PairingError, evaluate_dirs
from .network import Model, build_model, forward, load_model, predict_mask, save_model
from .selftest import run_selftest
from .tensor_core import ConvSpec, ShapeError, bilinear_resize
from .weights import WeightsError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: Optional[str]) -> ModelConfig:
    return ModelConfig.load(path) if path else ModelConfig()


def _model_from_args(args) -> Model:
    cfg = _load_config(args.config) if args.config else None
    if getattr(args, "weights", None):
        return load_model(args.weights, cfg)
    cfg = cfg or ModelConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return build_model(cfg)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_ratio(r: Fraction) -> str:
    return f"{float(r):.6f} ({r.numerator}/{r.denominator})"


# ---------------------------------------------------------------- subcommands

def cmd_init(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    model = build_model(cfg)
    save_model(model, args.out)
    print(f"wrote {model.weights.scalar_count()} parameters to {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model = _model_from_args(args)
    threshold = model.config.threshold if args.threshold is None else args.threshold
    out = _out_dir(args.out_dir)
    images = [Path(p) for p in args.images]
    loaded = []
    for path in images:
        img = read_rgb(path)
        loaded.append((path, img))
    size = args.size
    for start in range(0, len(loaded), args.batch):
        chunk = loaded[start:start + args.batch]
        batch = np.stack([
            bilinear_resize(img.transpose(2, 0, 1)[None], size, size)[0] for _, img in chunk
        ])
        probs = forward(model, np.clip(batch, 0, 1))
        for (path, img), prob in zip(chunk, probs):
            h, w = img.shape[:2]
            prob = bilinear_resize(prob[None], h, w)[0, 0]
            write_mask(out / f"{path.stem}.png", predict_mask(prob, threshold))
            if args.save_probs:
                (out / "probs").mkdir(exist_ok=True)
                write_gray(out / "probs" / f"{path.stem}.png", prob)
            print(f"{path.name}: water fraction {float((prob > threshold).mean()):.4f}")
    return EXIT_OK


def cmd_fog(args) -> int:
    out = _out_dir(args.out_dir)
    sweep = len(args.kappa) > 1
    for path in map(Path, args.images):
        img = read_rgb(path)
        h, w = img.shape[:2]
        if args.depth_dir:
            candidates = [Path(args.depth_dir) / f"{path.stem}{ext}" for ext in (".png", ".pfm")]
            found = [c for c in candidates if c.exists()]
            if not found:
                raise FileNotFoundError(f"no depth map for {path.name} in {args.depth_dir} "
                                        f"(looked for {', '.join(c.name for c in candidates)})")
            depth = load_depth(found[0], args.depth_scale)
        else:
            depth = constant_depth(h, w)
        for kappa in args.kappa:
            foggy = synthesize_fog(img, depth, FogParams(kappa, args.atmos, args.depth_scale))
            name = f"{path.stem}_k{kappa:g}.png" if sweep else f"{path.stem}.png"
            write_rgb(out / name, foggy)
            print(f"{path.name} -> {name} (kappa={kappa:g}, A={args.atmos:g})")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_dirs(args.pred_dir, args.gt_dir)
    cols = ("IoU", "F1", "MIoU", "MPA")
    width = max(len("aggregate"), *(len(r["image"]) for r in report.rows))
    print(f"{'image':<{width}}  " + "  ".join(f"{c:>7}" for c in cols))
    for r in report.rows:
        print(f"{r['image']:<{width}}  " + "  ".join(f"{r[c]:7.4f}" for c in cols))
    agg = report.aggregate
    print(f"{'aggregate':<{width}}  " + "  ".join(f"{agg[c]:7.4f}" for c in cols))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("image",) + cols)
            for r in report.rows:
                writer.writerow([r["image"]] + [repr(r[c]) for c in cols])
            writer.writerow(["aggregate"] + [repr(agg[c]) for c in cols])
    if args.plot:
        from .plotting import plot_eval
        plot_eval(report, args.plot)
    return EXIT_OK


def _analyze_layer(args) -> int:
    spec = ConvSpec(args.c_in, args.c_out, args.kernel, 1, args.kernel // 2)
    cc = complexity_report(spec, args.experts, args.out_h, args.out_w)
    print(f"layer: C_in={cc.c_in} C_out={cc.c_out} K={cc.kernel_size} M={cc.num_experts} "
          f"H'={cc.out_h} W'={cc.out_w}")
    print(f"standard params   {cc.standard_params}")
    print(f"standard FLOPs    {cc.standard_flops}")
    print(f"dynamic params    {cc.dynamic_params}")
    print(f"dynamic FLOPs     {cc.dynamic_flops}")
    print(f"R_param           {_fmt_ratio(cc.r_param)}")
    print(f"R_param approx    {_fmt_ratio(cc.r_param_approx)}  (1/K^2 + M)")
    print(f"R_FLOPs           {_fmt_ratio(cc.r_flops)}")
    print(f"R_FLOPs approx    {float(cc.r_flops_approx):.6f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.c_in is not None:
        return _analyze_layer(args)
    cfg = _load_config(args.config)
    rep = model_complexity(cfg, args.size)
    print(f"{'layer':<28} {'kind':<13} {'params':>12} {'GFLOPs':>10} {'R_param':>9} {'R_FLOPs':>9}")
    for l in rep.layers:
        rp = f"{float(l.r_param):9.4f}" if l.r_param is not None else f"{'':9}"
        rf = f"{float(l.r_flops):9.6f}" if l.r_flops is not None else f"{'':9}"
        print(f"{l.name:<28} {l.kind:<13} {l.params:>12} {l.flops / 1e9:>10.4f} {rp} {rf}")
    print(f"total params {rep.total_params} ({rep.mparams:.2f} M)")
    print(f"total GFLOPs {rep.gflops:.2f} at {args.size}x{args.size}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("layer", "kind", "params", "flops", "r_param", "r_flops"))
            for l in rep.layers:
                writer.writerow((l.name, l.kind, l.params, l.flops,
                                 "" if l.r_param is None else float(l.r_param),
                                 "" if l.r_flops is None else float(l.r_flops)))
            writer.writerow(("total", "", rep.total_params, rep.total_flops, "", ""))
    if args.plot:
        from .plotting import plot_complexity
        plot_complexity(rep, args.plot)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    model = _model_from_args(args)
    rng = np.random.default_rng(model.config.seed)
    x = rng.random((args.batch, model.config.input_channels, args.size, args.size)).astype(np.float32)
    for _ in range(args.warmup):
        forward(model, x)
    profile, times, hashes = {}, [], []
    for _ in range(args.iters):
        t0 = time.perf_counter()
        y = forward(model, x, profile)
        times.append(time.perf_counter() - t0)
        hashes.append(hashlib.sha256(y.tobytes()).hexdigest())
    fps = [args.batch / t for t in times]
    profile = {k: v / args.iters for k, v in profile.items()}
    print(f"input {args.batch}x{model.config.input_channels}x{args.size}x{args.size}, "
          f"{args.warmup} warm-up, {args.iters} timed")
    print(f"mean FPS   {statistics.fmean(fps):.4f}")
    print(f"median FPS {statistics.median(fps):.4f}")
    print(f"output sha256 {hashes[0]} ({'constant' if len(set(hashes)) == 1 else 'VARIES'})")
    total = sum(profile.values())
    for name, sec in sorted(profile.items(), key=lambda kv: -kv[1]):
        print(f"  {name:<14} {sec * 1e3:10.2f} ms  {100 * sec / total:5.1f}%")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("section", "seconds_per_iter"))
            for name, sec in profile.items():
                writer.writerow((name, sec))
            for i, (t, f) in enumerate(zip(times, fps)):
                writer.writerow((f"iteration{i + 1}", t))
    if args.plot:
        from .plotting import plot_bench
        plot_bench(profile, fps, args.plot)
    return EXIT_OK if len(set(hashes)) == 1 else EXIT_VALIDATION


def cmd_selftest(args) -> int:
    try:
        results = run_selftest(args.inject_fault)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} {detail}")
    failed = [name for name, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VALIDATION


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abcdwavenet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("init", help="write seeded random weights for a config")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("infer", help="predict water masks for images")
    s.add_argument("images", nargs="+")
    s.add_argument("--weights")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("--save-probs", action="store_true")
    s.add_argument("--size", type=int, default=256, help="network input side (default 256)")
    s.add_argument("--batch", type=int, default=1)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("fog", help="synthesise fog with the atmospheric scattering model")
    s.add_argument("images", nargs="+")
    s.add_argument("--kappa", type=float, nargs="+", default=[1.0])
    s.add_argument("--atmos", type=float, default=0.9)
    s.add_argument("--depth-dir")
    s.add_argument("--depth-scale", type=float, default=1.0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_fog)

    s = sub.add_parser("eval", help="IoU / F1 / MIoU / MPA over mask directories")
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--csv")
    s.add_argument("--plot")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("analyze", help="parameter / FLOP accounting")
    s.add_argument("--config")
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--csv")
    s.add_argument("--plot")
    layer = s.add_argument_group("single dynamic conv layer")
    layer.add_argument("--c-in", type=int)
    layer.add_argument("--c-out", type=int)
    layer.add_argument("--kernel", type=int, default=3)
    layer.add_argument("--experts", type=int, default=4)
    layer.add_argument("--out-h", type=int, default=256)
    layer.add_argument("--out-w", type=int, default=256)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("bench", help="time forward passes")
    s.add_argument("--config")
    s.add_argument("--weights")
    s.add_argument("--seed", type=int)
    s.add_argument("--iters", type=int, default=5)
    s.add_argument("--warmup", type=int, default=1)
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--csv")
    s.add_argument("--plot")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", help="run the embedded invariant checks")
    s.add_argument("--inject-fault", metavar="CHECK")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and args.c_in is not None and args.c_out is None:
        parser.error("--c-in requires --c-out")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ImageFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WeightsError, ConfigError, ShapeError, PairingError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
