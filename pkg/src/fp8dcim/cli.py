"""``fp8dcim`` command line: sweep, mac, calibrate, gen."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dsbp import DsbpConfig, partition
from .errors import ConfigError, Fp8DcimError
from .explorer import DISTRIBUTIONS, PRESETS, SweepSpec, gen_synthetic, run_sweep, write_csv
from .fiau import FiauStream
from .fp8 import Fp8Format
from .mac import run_mac_job
from .perf import DEFAULT_CALIBRATION, REFERENCE_POINTS, PerfCalibration, calibrate, estimate
from .tensor_io import import_real, load_f8t, save_f8t

SYNTH_SHAPE = (16, 256)


def _shape(text: str) -> tuple:
    try:
        dims = tuple(int(t) for t in text.replace("x", ",").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}") from None
    if not dims or min(dims) <= 0:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}")
    return dims


def _load(path: str, fmt: Fp8Format):
    p = Path(path)
    if p.suffix.lower() == ".f8t":
        return load_f8t(p)
    return import_real(p, fmt)


def _operands(args):
    """Tensors from files, or the seeded synthetic corpus when none are given."""
    if (args.inputs is None) != (args.weights is None):
        raise ConfigError("give both --inputs and --weights, or neither")
    if args.inputs is not None:
        return _load(args.inputs, args.input_format), _load(args.weights, args.weight_format)
    n = int(np.prod(SYNTH_SHAPE))
    x = gen_synthetic(args.dist, args.input_format, n, args.seed, SYNTH_SHAPE)
    w = gen_synthetic("uniform-exponent", args.weight_format, n, args.seed + 1, SYNTH_SHAPE)
    return x, w


def _calibration(args) -> PerfCalibration:
    return PerfCalibration.load(args.cal) if args.cal else DEFAULT_CALIBRATION


def _add_operand_flags(p):
    p.add_argument("--inputs", help="input tensor (.f8t, .csv or raw float32)")
    p.add_argument("--weights", help="weight tensor (.f8t, .csv or raw float32)")
    p.add_argument("--input-format", type=Fp8Format.parse, default=Fp8Format(5),
                   help="FP8 format for imported/synthetic inputs (default E5M2)")
    p.add_argument("--weight-format", type=Fp8Format.parse, default=Fp8Format(2),
                   help="FP8 format for imported/synthetic weights (default E2M5)")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="outlier-heavy",
                   help="synthetic input distribution when no files are given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group-size", type=int, default=64)


def cmd_sweep(args) -> int:
    if args.preset:
        spec = PRESETS[args.preset]
        spec = SweepSpec(spec.k_values, spec.b_fix_weight, spec.b_fix_input, spec.mode, args.seed, args.group_size)
    else:
        spec = SweepSpec(
            k_values=tuple(args.k), b_fix_weight=tuple(args.b_fix_weight),
            b_fix_input=tuple(args.b_fix_input), mode=args.mode, seed=args.seed,
            group_size=args.group_size,
        )
    x, w = _operands(args)
    rows = run_sweep(x, w, spec, _calibration(args))
    text = write_csv(rows, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def cmd_mac(args) -> int:
    x, w = _operands(args)
    in_cfg = DsbpConfig(args.k, args.b_fix_input, "input", args.group_size)
    w_cfg = DsbpConfig(args.k, args.b_fix_weight, "weight", args.group_size)
    xg = partition(x.reshape(-1, x.shape[-1]), args.group_size)
    wg = partition(w.reshape(-1, w.shape[-1]), args.group_size)
    if not 0 <= args.group < min(len(xg), len(wg)):
        raise ConfigError(f"group index {args.group} out of range")
    gx, gw = xg[args.group], wg[args.group]
    job = run_mac_job(gx, gw, in_cfg, w_cfg, args.mode)
    exact = float(np.dot(gx.to_real(), gw.to_real()))
    out = [
        f"mode            {job.mode}",
        f"input  e_max={job.input_alignment.e_max} b_g={job.input_alignment.b_g} I={job.input_width}",
        f"weight e_max={job.weight_alignment.e_max} b_g={job.weight_alignment.b_g} W={job.weight_width}",
        f"fiau offsets    {job.fiau_offsets.tolist()}",
        f"aligned inputs  {job.input_alignment.aligned.tolist()}",
        f"aligned weights {job.weight_alignment.aligned.tolist()}",
    ]
    if job.mpu_trace is not None:
        out += ["mpu trace:", job.mpu_trace.dump()]
    else:
        out.append("mpu             clock-gated (fixed mode)")
    if args.trace_fiau is not None:
        i = args.trace_fiau
        s = FiauStream(record=True)
        s.write(int(gx.sign[i] * gx.sig[i]), gx.fmt.mant_bits + 2)
        s.read(int(job.fiau_offsets[i]), job.input_width)
        out += [f"fiau trace for element {i}:", s.dump()]
    out += [
        f"integer acc     {job.acc}",
        f"scale exponent  {job.scale_exp}",
        f"macro result    {job.value:.9g}",
        f"exact result    {exact:.9g}",
    ]
    print("\n".join(out))
    return 0


def cmd_calibrate(args) -> int:
    cal = _calibration(args) if args.cal else calibrate(REFERENCE_POINTS)
    if args.out:
        cal.save(args.out)
    print(cal.to_text(), end="")
    print("# row, avg_i, avg_w, throughput (model/table), efficiency (model/table), residual")
    for r in REFERENCE_POINTS:
        rep = estimate(r.avg_i, r.avg_w, r.mode, cal)
        resid = (rep.efficiency - r.efficiency) / r.efficiency
        print(f"# {r.name:9s} {r.avg_i:5g} {r.avg_w:5g}  {rep.throughput:.4g}/{r.throughput:g}"
              f"  {rep.efficiency:.4g}/{r.efficiency:g}  {resid:+.2%}")
    return 0


def cmd_gen(args) -> int:
    n = int(np.prod(args.shape))
    t = gen_synthetic(args.dist, args.format, n, args.seed, args.shape)
    save_f8t(args.out, t)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fp8dcim", description="Variable-aligned-mantissa FP8 DCIM explorer")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="sweep (k, b_fix) and emit CSV")
    _add_operand_flags(p)
    p.add_argument("--k", type=Fraction, nargs="+", default=[Fraction(1), Fraction(2)])
    p.add_argument("--b-fix-weight", type=int, nargs="+", default=[3, 5, 7])
    p.add_argument("--b-fix-input", type=int, nargs="+", default=[3, 5, 7, 9, 11])
    p.add_argument("--mode", choices=("fixed", "dynamic", "both"), default="both")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out")
    p.add_argument("--cal", help="calibration file (key = value lines)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mac", help="run one group pair end to end and print the trace")
    _add_operand_flags(p)
    p.add_argument("--group", type=int, default=0)
    p.add_argument("--k", type=Fraction, default=Fraction(1))
    p.add_argument("--b-fix-input", type=int, default=6)
    p.add_argument("--b-fix-weight", type=int, default=5)
    p.add_argument("--mode", choices=("fixed", "dynamic"), default="dynamic")
    p.add_argument("--trace-fiau", type=int, metavar="ELEMENT")
    p.set_defaults(func=cmd_mac)

    p = sub.add_parser("calibrate", help="fit the performance model and print its residuals")
    p.add_argument("--out", help="write the calibration file here")
    p.add_argument("--cal", help="load and report an existing calibration file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("gen", help="write a seeded synthetic FP8 tensor")
    p.add_argument("--dist", choices=DISTRIBUTIONS, required=True)
    p.add_argument("--format", type=Fp8Format.parse, default=Fp8Format(4))
    p.add_argument("--shape", type=_shape, default=(4096,))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Fp8DcimError as exc:
        print(f"fp8dcim: error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"fp8dcim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
