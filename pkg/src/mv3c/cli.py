"""``mv3c`` command line: analyze, encode, decode, metrics, sweep, phantom.

Exit codes: 0 success, 2 usage error, 3 format/data error, 4 rate target
unreachable, 5 oracle failure. Diagnostics go to stderr, results to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import codestream, dwt3d, freq_analysis, param_opt
from .errors import ArgumentError, MV3CError, RateError
from .qs_mapping import DEFAULT_QMAX, DEFAULT_QMIN
from .volume_io import PHANTOM_KINDS, DTYPES, read_volume, synth_phantom, write_raw

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RATE, EXIT_ORACLE = 0, 2, 3, 4, 5


def _emit(args, doc, text_lines):
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print("\n".join(text_lines))


def _num(x):
    return None if x is None else float(x)


def cmd_analyze(args):
    v = read_volume(args.input)
    d = dwt3d.forward(v, args.wavelet, args.levels)
    stats = freq_analysis.compute_si(d)
    importance = None
    if args.grad:
        g = freq_analysis.GradientVolume.from_volume(read_volume(args.grad))
        importance = dict(freq_analysis.importance_scores(d, g))
    rows = []
    for sb, st in zip(d.subbands, stats):
        rows.append({
            "index": sb.index,
            "level": sb.level,
            "orientation": sb.orientation,
            "dims": list(sb.dims),
            "count": st.count,
            "mean": st.mean,
            "std": st.std,
            "laplace_b": st.laplace_b,
            "importance": None if importance is None else importance[sb.index],
        })
    doc = {
        "input": str(args.input),
        "dims": list(v.dims),
        "dtype": v.dtype,
        "wavelet": d.spec.value,
        "levels": d.levels,
        "subbands": rows,
    }
    lines = [f"{'n':>3} {'lvl':>3} {'orient':>6} {'dims':>14} {'std':>12} {'laplace_b':>12}"
             + (f" {'importance':>12}" if importance is not None else "")]
    for r in rows:
        line = (f"{r['index']:>3} {r['level']:>3} {r['orientation']:>6} "
                f"{'x'.join(map(str, r['dims'])):>14} {r['std']:>12.4f} {r['laplace_b']:>12.4f}")
        if importance is not None:
            line += f" {r['importance']:>12.6g}"
        lines.append(line)
    _emit(args, doc, lines)
    return EXIT_OK


def _encoder_config(args):
    return codestream.EncoderConfig(
        wavelet=args.wavelet,
        levels=args.levels,
        q_min=args.qmin,
        q_max=args.qmax,
        target_cr=args.target_cr,
        cr_tolerance=args.cr_tol,
        uniform_qs=args.uniform_qs,
        threads=args.threads,
    )


def cmd_encode(args):
    v = read_volume(args.input)
    result = codestream.encode(v, _encoder_config(args))
    if args.target_cr is not None and not result.converged:
        raise RateError(
            f"rate search ended at CR {result.cr:.3f} after {result.iterations} iterations, "
            f"not within {args.cr_tol:.1%} of {args.target_cr:g}"
        )
    try:
        Path(args.output).write_bytes(result.stream)
    except OSError as exc:
        raise MV3CError(f"cannot write {args.output}: {exc.strerror}") from exc
    params = result.plan.params
    doc = {
        "output": str(args.output),
        "bytes": len(result.stream),
        "cr": result.cr,
        "gamma": result.gamma,
        "iterations": result.iterations,
        "provenance": "nlm" if params else str(result.plan.provenance),
        "q_min": result.plan.q_min,
        "q_max": result.plan.q_max,
        "a": _num(params.a) if params else None,
        "b": _num(params.b) if params else None,
        "qs": list(result.plan.steps),
    }
    qs = result.plan.steps
    lines = [
        f"wrote {args.output}: {len(result.stream)} bytes, CR {result.cr:.3f}, "
        f"gamma {result.gamma:.6g}, iterations {result.iterations}",
        f"QS min {min(qs):.4g} max {max(qs):.4g} over {len(qs)} subbands",
    ]
    _emit(args, doc, lines)
    return EXIT_OK


def cmd_decode(args):
    data = Path(args.input).read_bytes()
    v = codestream.decode(data, args.threads)
    write_raw(v, args.output)
    print(f"wrote {args.output} ({'x'.join(map(str, v.dims))} {v.dtype})")
    return EXIT_OK


def cmd_metrics(args):
    orig = read_volume(args.original)
    recon = read_volume(args.reconstructed)
    stream = Path(args.stream).read_bytes() if args.stream else None
    m = codestream.metrics(orig, recon, stream)
    doc = {"mse": m.mse, "psnr": m.psnr, "peak": m.peak, "cr": m.cr,
           "subband_mae": None if m.subband_mae is None else list(m.subband_mae)}
    lines = [f"MSE {m.mse:.6g}", f"PSNR {m.psnr:.3f} dB (peak {m.peak:g})"]
    if m.cr is not None:
        lines.append(f"CR {m.cr:.3f}")
    _emit(args, doc, lines)
    return EXIT_OK


def _candidates(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad candidate list {text!r}") from None


def cmd_sweep(args):
    volumes = [read_volume(p) for p in args.inputs]
    oracle = param_opt.OracleSpec.parse(args.oracle, args.epsilon, args.timeout)
    cfg = codestream.EncoderConfig(wavelet=args.wavelet, levels=args.levels, threads=args.threads)
    if args.corner == "lower":
        res = param_opt.lower_corner_sweep(volumes, cfg, args.candidates, oracle)
    else:
        res = param_opt.upper_corner_sweep(volumes, cfg, args.qmin, args.candidates, oracle)
    lines = [f"{args.corner} corner sweep, reference score {res.reference:.6g}",
             f"{'QS':>8} {'CR':>10} {'score':>12}"]
    lines += [f"{q:>8g} {cr:>10.3f} {s:>12.6g}" for q, cr, s in res.rows]
    lines.append("selected: " + ("none admissible" if res.selected is None else f"{res.selected:g}"))
    _emit(args, res.as_dict(), lines)
    return EXIT_OK


def _dims(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from None
    if len(dims) == 1:
        dims = dims * 3
    if len(dims) != 3:
        raise argparse.ArgumentTypeError("dims need one or three values")
    return dims


def cmd_phantom(args):
    v = synth_phantom(args.kind, args.dims, args.seed, args.dtype)
    write_raw(v, args.output, description=f"{args.kind} seed={args.seed}")
    print(f"wrote {args.output} ({'x'.join(map(str, v.dims))} {v.dtype})")
    return EXIT_OK


def _wavelet(text):
    try:
        return dwt3d.WaveletSpec.parse(text)
    except ArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="mv3c", description="Machine-vision-guided 3D volume codec.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $MV3C_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def transform_opts(sp):
        sp.add_argument("--levels", type=int, default=3)
        sp.add_argument("--wavelet", type=_wavelet, default=dwt3d.WaveletSpec.CDF_9_7,
                        help="cdf-9-7 (default) or legall-5-3")

    sp = sub.add_parser("analyze", help="per-subband statistics")
    sp.add_argument("input")
    transform_opts(sp)
    sp.add_argument("--grad", help="gradient-magnitude volume for importance scores")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("encode", help="compress a volume to an MV3C stream")
    sp.add_argument("input")
    sp.add_argument("output")
    transform_opts(sp)
    sp.add_argument("--qmin", type=float, default=DEFAULT_QMIN)
    sp.add_argument("--qmax", type=float, default=DEFAULT_QMAX)
    sp.add_argument("--target-cr", type=float, default=None)
    sp.add_argument("--cr-tol", type=float, default=0.05)
    sp.add_argument("--uniform-qs", type=float, default=None,
                    help="bypass the SI mapping with one step for all subbands")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decompress an MV3C stream to raw + sidecar")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("metrics", help="MSE / PSNR / CR between two volumes")
    sp.add_argument("original")
    sp.add_argument("reconstructed")
    sp.add_argument("--stream", help="codestream path, for CR and per-subband error")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("sweep", help="corner-case sweep for Q_min / Q_max")
    sp.add_argument("corner", choices=("lower", "upper"))
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--candidates", type=_candidates, default=[1, 2, 4, 8, 16, 32])
    sp.add_argument("--oracle", default="psnr",
                    help="psnr, mae, or cmd:'<command> {orig} {recon}'")
    sp.add_argument("--epsilon", type=float, default=0.005)
    sp.add_argument("--timeout", type=float, default=param_opt.DEFAULT_TIMEOUT)
    sp.add_argument("--qmin", type=float, default=DEFAULT_QMIN, help="upper sweep only")
    transform_opts(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("phantom", help="write a synthetic test volume")
    sp.add_argument("kind", choices=PHANTOM_KINDS)
    sp.add_argument("output")
    sp.add_argument("--dims", type=_dims, default=(64, 64, 64))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dtype", choices=tuple(DTYPES), default="int16")
    sp.set_defaults(func=cmd_phantom)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MV3CError as exc:
        print(f"mv3c {args.command}: {exc}", file=sys.stderr)
        output = getattr(exc, "output", "")
        if output:
            print(output, file=sys.stderr, end="" if output.endswith("\n") else "\n")
        return exc.exit_code
    except OSError as exc:
        print(f"mv3c {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
