"""Design-space exploration: (k, b_fix) sweeps, Pareto extraction, synthetic data."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dsbp import DsbpConfig, sqnr
from .errors import ConfigError
from .fp8 import Fp8Format, Fp8Tensor
from .mac import macro_matmul
from .perf import DEFAULT_CALIBRATION, PerfCalibration, estimate
from .tensor_io import load_f8t

OUTLIER_RATE = 0.01
OUTLIER_GAP = 10
DISTRIBUTIONS = ("uniform-exponent", "concentrated", "outlier-heavy")
CSV_COLUMNS = (
    "config_id", "k", "b_fix_weight", "b_fix_input",
    "avg_i", "avg_w", "sqnr_db", "throughput", "efficiency", "pareto",
)


@dataclass(frozen=True)
class SweepSpec:
    """Grid of predictor settings. ``mode`` is ``fixed``, ``dynamic`` or ``both``.

    Fixed points always run with ``k = 0`` and the MPU gated off.
    """

    k_values: tuple = (1, 2)
    b_fix_weight: tuple = (3, 5, 7)
    b_fix_input: tuple = (3, 5, 7, 9, 11)
    mode: str = "both"
    seed: int = 0
    group_size: int = 64

    def __post_init__(self):
        if self.mode not in ("fixed", "dynamic", "both"):
            raise ConfigError(f"sweep mode must be fixed, dynamic or both, got {self.mode!r}")
        if not self.b_fix_weight or not self.b_fix_input:
            raise ConfigError("b_fix lists must be non-empty")
        if self.mode != "fixed" and not self.k_values:
            raise ConfigError("dynamic sweeps need at least one k value")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "k_values", tuple(Fraction(k) for k in self.k_values))

    def configs(self) -> list[tuple[str, str, Fraction, int, int]]:
        """``(config_id, mode, k, b_fix_weight, b_fix_input)`` in id order."""
        out = {}
        if self.mode in ("fixed", "both"):
            for bw in self.b_fix_weight:
                for bi in self.b_fix_input:
                    cid = f"fixed-k000-w{bw:02d}-i{bi:02d}"
                    out[cid] = (cid, "fixed", Fraction(0), bw, bi)
        if self.mode in ("dynamic", "both"):
            for k in self.k_values:
                for bw in self.b_fix_weight:
                    for bi in self.b_fix_input:
                        cid = f"dsbp-k{int(k * 4):03d}-w{bw:02d}-i{bi:02d}"
                        out[cid] = (cid, "dynamic", k, bw, bi)
        return [out[c] for c in sorted(out)]


PRESETS = {
    "e5m3-fixed": SweepSpec(k_values=(0,), b_fix_weight=(3,), b_fix_input=(3,), mode="fixed"),
    "e5m7-fixed": SweepSpec(k_values=(0,), b_fix_weight=(7,), b_fix_input=(7,), mode="fixed"),
    "precise": SweepSpec(k_values=(1,), b_fix_weight=(5,), b_fix_input=(6,), mode="dynamic"),
    "efficient": SweepSpec(k_values=(2,), b_fix_weight=(4,), b_fix_input=(4,), mode="dynamic"),
}


@dataclass(frozen=True)
class SweepRow:
    config_id: str
    k: Fraction
    b_fix_weight: int
    b_fix_input: int
    avg_i: float
    avg_w: float
    sqnr_db: float
    throughput: float
    efficiency: float
    pareto: bool = False


def pareto_filter(rows: list[SweepRow]) -> list[SweepRow]:
    """Flag rows not dominated on (sqnr_db, efficiency); input order is kept."""
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].sqnr_db, -rows[i].efficiency))
    flags = [False] * len(rows)
    best_prev = -math.inf  # best efficiency among strictly higher SQNR
    pos = 0
    while pos < len(order):
        end = pos
        s = rows[order[pos]].sqnr_db
        while end < len(order) and rows[order[end]].sqnr_db == s:
            end += 1
        tier = order[pos:end]
        top = max(rows[i].efficiency for i in tier)
        for i in tier:
            flags[i] = rows[i].efficiency == top and rows[i].efficiency > best_prev
        best_prev = max(best_prev, top)
        pos = end
    return [replace(r, pareto=f) for r, f in zip(rows, flags)]


def _as_tensor(obj) -> Fp8Tensor:
    if isinstance(obj, Fp8Tensor):
        return obj
    return load_f8t(obj)


def evaluate_config(x: Fp8Tensor, w: Fp8Tensor, mode: str, k, b_fix_weight: int, b_fix_input: int,
                    group_size: int = 64, cal: PerfCalibration = DEFAULT_CALIBRATION, exact=None):
    """Run one configuration; returns ``(avg_i, avg_w, sqnr_db, PerfReport)``."""
    in_cfg = DsbpConfig(k=k, b_fix=b_fix_input, kind="input", group_size=group_size)
    w_cfg = DsbpConfig(k=k, b_fix=b_fix_weight, kind="weight", group_size=group_size)
    res = macro_matmul(x, w, in_cfg, w_cfg, mode)
    if exact is None:
        exact = reference_matmul(x, w)
    perf_mode = "fixed-fp" if mode == "fixed" else "dynamic-fp"
    report = estimate(res.avg_input_width, res.avg_weight_width, perf_mode, cal)
    return res.avg_input_width, res.avg_weight_width, sqnr(exact, res.output), report


def reference_matmul(x: Fp8Tensor, w: Fp8Tensor) -> np.ndarray:
    xr = x.to_real().reshape(-1, x.shape[-1])
    wr = w.to_real().reshape(-1, w.shape[-1])
    return xr @ wr.T


def run_sweep(inputs, weights, spec: SweepSpec, cal: PerfCalibration = DEFAULT_CALIBRATION) -> list[SweepRow]:
    """Evaluate every configuration of ``spec``; rows come back Pareto-flagged, id-sorted."""
    x, w = _as_tensor(inputs), _as_tensor(weights)
    if x.shape[-1] != w.shape[-1]:
        raise ConfigError(f"reduction lengths differ: inputs {x.shape}, weights {w.shape}")
    exact = reference_matmul(x, w)
    rows = []
    for cid, mode, k, bw, bi in spec.configs():
        avg_i, avg_w, q, rep = evaluate_config(x, w, mode, k, bw, bi, spec.group_size, cal, exact)
        rows.append(SweepRow(cid, k, bw, bi, avg_i, avg_w, q, rep.throughput, rep.efficiency))
    return pareto_filter(rows)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v) and v > 0:
        return "lossless"
    return f"{v:.6g}"


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in rows:
        wr.writerow([r.config_id] + [_fmt(getattr(r, c)) for c in CSV_COLUMNS[1:]])
    return buf.getvalue()


def gen_synthetic(
    dist: str, fmt: Fp8Format, count: int, seed: int = 0, shape: tuple | None = None, block: int = 64
) -> Fp8Tensor:
    """Seeded FP8 tensor with a chosen exponent profile.

    * ``uniform-exponent``: exponent field uniform over the normal range
    * ``concentrated``: one shared exponent, so every group has zero shift
    * ``outlier-heavy``: each ``block`` of elements shares one bulk exponent
      ~10 binades (or the format's whole range) below the maximum; about 1%
      of elements are near-maximum outliers, so blocks hit by an outlier get
      a wide shift spread while the rest stay tight
    """
    if count <= 0:
        raise ConfigError("count must be positive")
    if dist not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {dist!r}; choose from {', '.join(DISTRIBUTIONS)}")
    rng = np.random.default_rng(seed)
    m = fmt.mant_bits
    hi = fmt.max_exp_field
    sign = rng.integers(0, 2, count)
    mant = rng.integers(0, 1 << m, count)
    if dist == "uniform-exponent":
        exp = rng.integers(1, hi + 1, count)
    elif dist == "concentrated":
        exp = np.full(count, fmt.bias)
    else:
        gap = min(OUTLIER_GAP, hi - 1)
        blocks = -(-count // block)
        block_exp = hi - gap + np.rint(rng.normal(0.0, 1.0, blocks)).astype(np.int64)
        bulk = np.clip(np.repeat(block_exp, block)[:count], 1, hi)
        outlier = rng.random(count) < OUTLIER_RATE
        exp = np.where(outlier, hi - rng.integers(0, 2, count), bulk)
    codes = (sign << 7) | (exp << m) | mant
    if fmt.exp_bits == 4:
        codes = np.where((codes & 0x7F) == 0x7F, codes - 1, codes)
    t = Fp8Tensor(codes.astype(np.uint8), fmt)
    return t.reshape(*shape) if shape is not None else t


def write_csv(rows: list[SweepRow], out: str | Path | None) -> str:
    text = rows_to_csv(rows)
    if out is not None:
        Path(out).write_text(text)
    return text
