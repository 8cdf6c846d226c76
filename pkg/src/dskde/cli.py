"""Command-line entry point: ``dskde {bandwidth,fit,score,detect,simulate,eval}``.

Option values resolve as command-line flag, then ``--config`` file entry,
then built-in default.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import bandwidth as bw
from .estimators import DEFAULT_TRUNCATION, density_map, gpa_fit
from .evaluation import evaluate, read_annotations
from .extract import DetectionParams, detect_stages, rescale01
from .fileio import (list_frames, load_frames, load_model, read_config, read_detections, read_pgm,
                     save_model, write_detections, write_pgm)
from .simulate import ESTIMATORS, SimConfig, plot_report, run_mse_benchmark


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).replace(",", " ").split())


def _str_list(s: str) -> tuple[str, ...]:
    return tuple(v for v in str(s).replace(",", " ").split())


def _flag(s) -> bool:
    if isinstance(s, bool):
        return s
    return str(s).strip().lower() in ("1", "true", "yes", "on")


# option name -> (converter, default); None default means "required" or "optional without default"
OPTIONS = {
    "bandwidth": {
        "frames": (str, None), "stride": (int, 1), "n": (int, None), "m": (int, None),
        "sigma": (float, None), "cd_constant": (float, bw.SILVERMAN_CONSTANT),
    },
    "fit": {
        "frames": (str, None), "stride": (int, 1), "gstar": (int, 500), "variant": (str, "ds"),
        "seed": (int, 0), "out": (str, None), "grid": (str, "random"), "h": (float, None),
        "cd_constant": (float, bw.SILVERMAN_CONSTANT), "trunc": (float, DEFAULT_TRUNCATION),
    },
    "score": {"model": (str, None), "frame": (str, None), "out": (str, None), "csv": (str, None)},
    "detect": {
        "model": (str, None), "frames": (str, None), "stride": (int, 1), "alpha1": (float, 0.06),
        "alpha2": (float, 0.42), "pool": (int, 33), "min_area": (float, 5500.0),
        "connectivity": (int, 8), "scale_min_area": (_flag, True), "out": (str, None),
        "dump_dir": (str, None),
    },
    "simulate": {
        "out": (str, None), "plot": (str, None), "p": (int, 64), "q": (int, 64),
        "sigma": (float, 0.16), "mean_field": (str, None), "seed": (int, 0), "g_star": (int, 500),
        "g_plus": (int, 100), "reps": (int, 20), "n_values": (_int_list, (100, 400)),
        "estimators": (_str_list, ESTIMATORS), "cd_constant": (float, bw.SILVERMAN_CONSTANT),
        "trunc": (float, DEFAULT_TRUNCATION),
    },
    "eval": {"detections": (str, None), "annotations": (str, None), "inclusive": (_flag, False)},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dskde", description="Doubly smoothed density estimation on image stacks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bandwidth", help="rule-of-thumb bandwidths for a stack or explicit (N, M, sigma)")
    p.add_argument("--frames", help="directory of PGM frames")
    p.add_argument("--stride", type=int)
    p.add_argument("--n", type=int, help="frame count N")
    p.add_argument("--m", type=int, help="pixels per frame M")
    p.add_argument("--sigma", type=float)
    p.add_argument("--cd-constant", type=float)

    p = sub.add_parser("fit", help="precompute a GPA table from background frames")
    p.add_argument("--frames")
    p.add_argument("--stride", type=int)
    p.add_argument("--gstar", type=int)
    p.add_argument("--variant", choices=["ds", "cd"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--grid", choices=["random", "even"])
    p.add_argument("--h", type=float, help="override the rule-of-thumb bandwidth")
    p.add_argument("--cd-constant", type=float)
    p.add_argument("--trunc", type=float, help="spatial truncation radius in bandwidths")

    p = sub.add_parser("score", help="density map of one frame")
    p.add_argument("--model")
    p.add_argument("--frame")
    p.add_argument("--out", help="rescaled 8-bit PGM")
    p.add_argument("--csv", help="raw density values")

    p = sub.add_parser("detect", help="extract one anomaly box per frame")
    p.add_argument("--model")
    p.add_argument("--frames")
    p.add_argument("--stride", type=int)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--pool", type=int)
    p.add_argument("--min-area", type=float)
    p.add_argument("--connectivity", type=int, choices=[4, 8])
    p.add_argument("--no-scale-min-area", dest="scale_min_area", action="store_const", const=False)
    p.add_argument("--out")
    p.add_argument("--dump-dir", help="write intermediate stage images here")

    p = sub.add_parser("simulate", help="truncated-normal MSE benchmark")
    p.add_argument("--out")
    p.add_argument("--plot", help="optional grayscale summary figure")
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--mean-field", help=".npy or whitespace text file with a p x q mean field")
    p.add_argument("--seed", type=int)
    p.add_argument("--g-star", type=int)
    p.add_argument("--g-plus", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--n-values", type=_int_list)
    p.add_argument("--estimators", type=_str_list)
    p.add_argument("--cd-constant", type=float)
    p.add_argument("--trunc", type=float)

    p = sub.add_parser("eval", help="F1 and IoU of detections against annotations")
    p.add_argument("--detections")
    p.add_argument("--annotations")
    p.add_argument("--inclusive", action="store_const", const=True,
                   help="annotation upper bounds are inclusive")

    for name, sp in sub.choices.items():
        sp.add_argument("--config", help="key = value file; flags take precedence")
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Merge flags, config-file entries and defaults for one subcommand."""
    known = OPTIONS[command]
    config = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(config) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    out = {}
    for key, (conv, default) in known.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in config:
            out[key] = conv(config[key])
        else:
            out[key] = default
    return out


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ValueError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def cmd_bandwidth(opts: dict) -> None:
    if opts["frames"]:
        stack = load_frames(opts["frames"], opts["stride"])
        n, m, sigma = stack.n, stack.m, bw.empirical_sigma(stack)
    else:
        _require(opts, "n", "m", "sigma")
        n, m, sigma = opts["n"], opts["m"], opts["sigma"]
    h = bw.ds_bandwidth(n, m, sigma)
    c1, c2 = bw.mse_constants(sigma)
    print(f"N={n} M={m}")
    print(f"sigma_hat={sigma:.6g}")
    print(f"h={h:.4f}")
    print(f"h_star={bw.gpa_bandwidth(h):.6g}")
    print(f"h_cd={bw.cd_bandwidth(n, sigma, opts['cd_constant']):.6g}")
    print(f"C1={c1:.10g}")
    print(f"C2={c2:.10g}")


def cmd_fit(opts: dict) -> None:
    _require(opts, "frames", "out")
    stack = load_frames(opts["frames"], opts["stride"])
    sigma = bw.empirical_sigma(stack)
    if sigma == 0.0:
        raise bw.DegenerateInputError("frames are constant; bandwidth undefined")
    plan = bw.plan_bandwidths(stack.n, stack.m, sigma, opts["variant"], opts["cd_constant"], opts["h"])
    t0 = time.perf_counter()
    table = gpa_fit(stack, opts["gstar"], plan, opts["variant"], opts["seed"], opts["grid"], opts["trunc"])
    save_model(table, opts["out"])
    print(f"fitted GPA-{opts['variant'].upper()} on {stack.n} frames of {stack.p}x{stack.q}: "
          f"h={plan.h:.6g} h_star={plan.h_star:.6g} G*={table.g_star} "
          f"in {time.perf_counter() - t0:.2f}s -> {opts['out']}")


def cmd_score(opts: dict) -> None:
    _require(opts, "model", "frame")
    if not (opts["out"] or opts["csv"]):
        raise ValueError("score needs --out and/or --csv")
    table = load_model(opts["model"])
    frame = read_pgm(opts["frame"]).astype(float) / 255.0
    dens = density_map(table, frame)
    if opts["out"]:
        write_pgm(opts["out"], rescale01(dens).values)
    if opts["csv"]:
        np.savetxt(opts["csv"], dens.values, delimiter=",", fmt="%.10g")
    print(f"density range [{dens.values.min():.6g}, {dens.values.max():.6g}]")


def cmd_detect(opts: dict) -> None:
    _require(opts, "model", "frames", "out")
    table = load_model(opts["model"])
    params = DetectionParams(opts["alpha1"], opts["alpha2"], opts["pool"], opts["min_area"],
                             opts["connectivity"], opts["scale_min_area"])
    dump = Path(opts["dump_dir"]) if opts["dump_dir"] else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    rows = []
    found = 0
    for path in list_frames(opts["frames"])[::opts["stride"]]:
        frame = read_pgm(path).astype(float) / 255.0
        t0 = time.perf_counter()
        stages = detect_stages(table, frame, params)
        secs = time.perf_counter() - t0
        rows.append((path.stem, stages.bbox, secs))
        found += stages.bbox is not None
        if dump:
            write_pgm(dump / f"{path.stem}_density.pgm", stages.rescaled.values)
            write_pgm(dump / f"{path.stem}_foreground.pgm", stages.foreground.values)
            write_pgm(dump / f"{path.stem}_blurred.pgm", stages.blurred.values)
            write_pgm(dump / f"{path.stem}_mask.pgm", stages.mask.astype(float))
    write_detections(opts["out"], rows)
    print(f"{found}/{len(rows)} frames with a detection -> {opts['out']}")


def cmd_simulate(opts: dict) -> None:
    _require(opts, "out")
    cfg = SimConfig(p=opts["p"], q=opts["q"], sigma=opts["sigma"], mean_field=opts["mean_field"],
                    seed=opts["seed"], g_star=opts["g_star"], g_plus=opts["g_plus"], reps=opts["reps"],
                    n_values=opts["n_values"], estimators=opts["estimators"],
                    cd_constant=opts["cd_constant"], trunc_radius_bandwidths=opts["trunc"])
    report = run_mse_benchmark(cfg)
    report.to_csv(opts["out"])
    if opts["plot"]:
        plot_report(report, opts["plot"])
    for r in report.rows:
        print(f"{r.estimator:7s} N={r.n:<6d} mean log MSE={r.mean_log_mse:8.4f} "
              f"s/frame={r.mean_seconds:.3g} (h rule: {r.bandwidth_rule})")


def cmd_eval(opts: dict) -> None:
    _require(opts, "detections", "annotations")
    boxes, seconds = read_detections(opts["detections"])
    annotations = read_annotations(opts["annotations"], inclusive=opts["inclusive"])
    print(evaluate(boxes, annotations, seconds).summary())


COMMANDS = {
    "bandwidth": cmd_bandwidth, "fit": cmd_fit, "score": cmd_score,
    "detect": cmd_detect, "simulate": cmd_simulate, "eval": cmd_eval,
}


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](resolve_options(args.command, args))
    except (ValueError, OSError, IndexError, KeyError, ArithmeticError) as exc:
        print(f"dskde {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
