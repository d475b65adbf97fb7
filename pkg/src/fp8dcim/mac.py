"""Behavioural model of the 64x96 precision-scalable INT MAC array.

Weights are cut into 2-bit slices, one slice per SRAM column; only the most
significant slice is signed (SNF set). Inputs stream in bit-serially,
MSB first, with the MSB carrying negative weight. Each column reduces its
64 one-bit x two-bit products through an adder tree (modelled as exact
integer addition), and the fusion unit recombines the ``W/2`` columns of a
channel:

* 2b: one column, no fusion
* 4b: ``c0 + 4*c1``
* 8b: ``(c0 + 4*c1) + 16*(c2 + 4*c3)``, i.e. two 4b pairs
* 6b: ``(c0 + 4*c1) + 16*c2``, the 4b pair plus the extra third-column path
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsbp import DsbpConfig, Group, GroupAlignment, align_group, partition, predict_bitwidth, round_to_valid
from .errors import ConfigError, ShapeMismatchError
from .fiau import fiau_align_group
from .fp8 import Fp8Tensor
from .mpu import MpuConfig, MpuTrace, mpu_predict

ROWS = 64
COLUMNS = 96
WEIGHT_WIDTHS = (2, 4, 6, 8)
ACC_BITS = 32


@dataclass(frozen=True)
class WeightSlices:
    cells: tuple  # raw 2-bit patterns, LSB slice first
    snf: tuple
    width: int

    @property
    def slices(self) -> tuple:
        """Slice values with the SNF slice read as signed."""
        return tuple(_cell_value(c, f) for c, f in zip(self.cells, self.snf))

    def recompose(self) -> int:
        return sum(v * 4**j for j, v in enumerate(self.slices))


def _cell_value(cell, snf):
    return cell - 4 if snf and cell >= 2 else cell


def _check_width(value, width: int, what: str) -> None:
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    v = np.asarray(value)
    if np.any((v < lo) | (v > hi)):
        raise ConfigError(f"{what} outside {width}-bit two's complement range [{lo}, {hi}]")


def decompose_weight(w: int, width: int) -> WeightSlices:
    if width not in WEIGHT_WIDTHS:
        raise ConfigError(f"weight width must be one of {WEIGHT_WIDTHS}, got {width}")
    _check_width(w, width, f"weight {w}")
    n = width // 2
    cells = tuple((int(w) >> (2 * j)) & 3 for j in range(n))
    snf = tuple(j == n - 1 for j in range(n))
    return WeightSlices(cells, snf, width)


def column_mac(input_bits, cells, snf: bool):
    """One column's adder tree: ``sum(bit_i * cell_i)`` over the last axis."""
    b = np.asarray(input_bits, dtype=np.int64)
    c = np.asarray(cells, dtype=np.int64)
    if snf:
        c = np.where(c >= 2, c - 4, c)
    out = (b * c).sum(axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def fuse_columns(cols: list, width: int):
    """Shift-and-add recombination of per-column sums into one channel sum."""
    if width == 2:
        return cols[0]
    low = cols[0] + (cols[1] << 2)
    if width == 4:
        return low
    if width == 6:
        return low + (cols[2] << 4)
    if width == 8:
        return low + ((cols[2] + (cols[3] << 2)) << 4)
    raise ConfigError(f"no fusion path for {width}-bit weights")


def fused_mac(inputs, weights, input_width: int, weight_width: int):
    """Bit-serial, slice-fused dot product over the last axis.

    Works on a single 64-vector pair or on broadcastable batches of them;
    the result equals ``sum(inputs * weights)`` exactly.
    """
    if not 2 <= input_width <= 12:
        raise ConfigError(f"input width {input_width} outside 2..12")
    if weight_width not in WEIGHT_WIDTHS:
        raise ConfigError(f"weight width must be one of {WEIGHT_WIDTHS}, got {weight_width}")
    x = np.asarray(inputs, dtype=np.int64)
    w = np.asarray(weights, dtype=np.int64)
    if x.shape[-1] != w.shape[-1]:
        raise ShapeMismatchError(f"row count mismatch: {x.shape[-1]} vs {w.shape[-1]}")
    if x.shape[-1] > ROWS:
        raise ConfigError(f"at most {ROWS} rows per column")
    _check_width(x, input_width, "input")
    _check_width(w, weight_width, "weight")

    n = weight_width // 2
    cells = [(w >> (2 * j)) & 3 for j in range(n)]
    acc = None
    for bit in range(input_width - 1, -1, -1):
        plane = (x >> bit) & 1
        cols = [column_mac(plane, cells[j], snf=(j == n - 1)) for j in range(n)]
        partial = np.asarray(fuse_columns(cols, weight_width))
        acc = -partial if acc is None else (acc << 1) + partial
    if np.any(np.abs(acc) >= 1 << (ACC_BITS - 1)):
        raise OverflowError("accumulator exceeds 32 bits")
    return int(acc) if acc.ndim == 0 else acc


@dataclass(frozen=True)
class ArrayConfig:
    weight_width: int = 8
    input_width: int = 8
    rows: int = ROWS
    columns: int = COLUMNS

    def __post_init__(self):
        if self.weight_width not in WEIGHT_WIDTHS:
            raise ConfigError(f"weight width must be one of {WEIGHT_WIDTHS}")
        if not 2 <= self.input_width <= 12:
            raise ConfigError("input width must be in 2..12")

    @property
    def columns_per_channel(self) -> int:
        return self.weight_width // 2

    @property
    def channels(self) -> int:
        return self.columns // self.columns_per_channel


class MacArray:
    """Whole-array view: a weight matrix mapped onto 96 two-bit columns.

    Channel ``c`` occupies columns ``c*W/2 .. c*W/2 + W/2 - 1``, LSB slice
    first; the last column of every channel carries SNF.
    """

    def __init__(self, cfg: ArrayConfig):
        self.cfg = cfg
        self.cells = np.zeros((cfg.rows, cfg.columns), dtype=np.int64)
        self.snf = np.zeros(cfg.columns, dtype=bool)
        per = cfg.columns_per_channel
        self.snf[per - 1 :: per] = True

    def load_weights(self, weights) -> None:
        w = np.asarray(weights, dtype=np.int64)
        cfg = self.cfg
        if w.ndim != 2 or w.shape[0] > cfg.rows or w.shape[1] > cfg.channels:
            raise ShapeMismatchError(
                f"weight matrix {w.shape} does not fit {cfg.rows} rows x {cfg.channels} channels"
            )
        _check_width(w, cfg.weight_width, "weight")
        self.cells[:] = 0
        per = cfg.columns_per_channel
        for j in range(per):
            self.cells[: w.shape[0], j : per * w.shape[1] : per] = (w >> (2 * j)) & 3

    def compute(self, inputs) -> np.ndarray:
        """Per-channel dot products for one input vector (zero-padded to 64 rows)."""
        cfg = self.cfg
        x = np.zeros(cfg.rows, dtype=np.int64)
        v = np.asarray(inputs, dtype=np.int64)
        x[: len(v)] = v
        _check_width(x, cfg.input_width, "input")
        signed_cells = np.where(self.snf & (self.cells >= 2), self.cells - 4, self.cells)
        per = cfg.columns_per_channel
        acc = None
        for bit in range(cfg.input_width - 1, -1, -1):
            plane = (x >> bit) & 1
            col_sums = plane @ signed_cells  # 96 adder trees
            cols = [col_sums[j::per] for j in range(per)]
            partial = fuse_columns(cols, cfg.weight_width)
            acc = -partial if acc is None else (acc << 1) + partial
        return acc


@dataclass
class MacJob:
    """One input/weight group pair routed through the full macro pipeline."""

    input_alignment: GroupAlignment
    weight_alignment: GroupAlignment
    input_width: int
    weight_width: int
    acc: int
    scale_exp: int
    mode: str
    mpu_trace: MpuTrace | None = None
    fiau_offsets: np.ndarray = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return float(np.ldexp(float(self.acc), self.scale_exp))


def _as_group(g) -> Group:
    if isinstance(g, Group):
        return g
    if isinstance(g, Fp8Tensor):
        return Group.from_tensor(g)
    raise TypeError(f"expected Group or Fp8Tensor, got {type(g).__name__}")


def input_bitwidth(group: Group, cfg: DsbpConfig, mode: str) -> tuple[int, MpuTrace | None]:
    """On-the-fly input bitwidth; the MPU is bypassed (clock-gated) in fixed mode."""
    if mode == "fixed":
        return round_to_valid(cfg.b_fix, "input"), None
    if mode != "dynamic":
        raise ConfigError(f"mode must be 'fixed' or 'dynamic', got {mode!r}")
    b_g, trace = mpu_predict(group.shift_profile().shifts, MpuConfig.from_k(cfg.k, cfg.b_fix))
    return b_g, trace


def weight_bitwidth(group: Group, cfg: DsbpConfig, mode: str) -> tuple[int | None, int]:
    """Offline weight bitwidth from the exact reference predictor."""
    if mode == "fixed":
        return None, round_to_valid(cfg.b_fix, "weight")
    return predict_bitwidth(group.shift_profile(), cfg)


def align_input_fiau(group: Group, b_g: int) -> GroupAlignment:
    """Align an input group through the FIAU (truncating)."""
    fmt = group.fmt
    w_in = fmt.mant_bits + 2
    e_max = group.e_max
    exps = np.where(group.valid, group.e_align, e_max)
    aligned = fiau_align_group(group.sign * group.sig, e_max, exps, b_g, w_in)
    aligned = np.where(group.valid, aligned, 0)
    return GroupAlignment(
        e_max=e_max, b_g=b_g, aligned=aligned, scale_exp=e_max - fmt.bias - (b_g - 1),
        valid=group.valid.copy(), shifts=group.shifts,
    )


def run_mac_job(x_group, w_group, in_cfg: DsbpConfig, w_cfg: DsbpConfig, mode: str = "dynamic") -> MacJob:
    x, w = _as_group(x_group), _as_group(w_group)
    if len(x) != len(w):
        raise ShapeMismatchError(f"group sizes differ: {len(x)} vs {len(w)}")
    if len(x) > ROWS:
        raise ShapeMismatchError(f"a group holds at most {ROWS} elements")
    b_in, trace = input_bitwidth(x, in_cfg, mode)
    b_dyn_w, b_w = weight_bitwidth(w, w_cfg, mode)
    xa = align_input_fiau(x, b_in)
    wa = align_group(w, b_w, rounding="nearest", b_dyn=b_dyn_w)
    acc = fused_mac(xa.aligned, wa.aligned, b_in + 1, b_w + 1)
    return MacJob(
        input_alignment=xa, weight_alignment=wa, input_width=b_in + 1, weight_width=b_w + 1,
        acc=acc, scale_exp=xa.scale_exp + wa.scale_exp, mode=mode, mpu_trace=trace,
        fiau_offsets=xa.shifts,
    )


def fp_macro_mac(x_group, w_group, in_cfg: DsbpConfig, w_cfg: DsbpConfig, mode: str = "dynamic") -> float:
    """Approximate FP8 dot product of one input group and one weight group."""
    return run_mac_job(x_group, w_group, in_cfg, w_cfg, mode).value


@dataclass
class MatmulResult:
    output: np.ndarray
    input_bits: np.ndarray  # b_g per input group, shape (B, G)
    weight_bits: np.ndarray  # b_g per weight group, shape (C, G)

    @property
    def avg_input_width(self) -> float:
        return float(self.input_bits.mean()) + 1

    @property
    def avg_weight_width(self) -> float:
        return float(self.weight_bits.mean()) + 1


def macro_matmul(x: Fp8Tensor, w: Fp8Tensor, in_cfg: DsbpConfig, w_cfg: DsbpConfig, mode: str = "dynamic") -> MatmulResult:
    """``x @ w.T`` through the macro: x is (B, N) inputs, w is (C, N) weights.

    Each (input row, weight row, group) triple is one column-group MAC; the
    integer results are rescaled per group and accumulated in float64.
    """
    x2 = x.reshape(-1, x.shape[-1])
    w2 = w.reshape(-1, w.shape[-1])
    if x2.shape[-1] != w2.shape[-1]:
        raise ShapeMismatchError(f"reduction lengths differ: {x2.shape[-1]} vs {w2.shape[-1]}")
    gs = in_cfg.group_size
    if gs != w_cfg.group_size or gs > ROWS:
        raise ConfigError("inputs and weights need the same group size, at most 64")
    B, C = x2.shape[0], w2.shape[0]
    xg, wg = partition(x2, gs), partition(w2, gs)
    G = len(xg) // B

    xa = []
    for g in xg:
        b, _ = input_bitwidth(g, in_cfg, mode)
        xa.append(align_input_fiau(g, b))
    wa = []
    for g in wg:
        b_dyn, b = weight_bitwidth(g, w_cfg, mode)
        wa.append(align_group(g, b, rounding="nearest", b_dyn=b_dyn))

    xi = np.stack([a.aligned for a in xa]).reshape(B, G, gs)
    wi = np.stack([a.aligned for a in wa]).reshape(C, G, gs)
    xb = np.array([a.b_g for a in xa]).reshape(B, G)
    wb = np.array([a.b_g for a in wa]).reshape(C, G)
    xs = np.array([a.scale_exp for a in xa]).reshape(B, G)
    ws = np.array([a.scale_exp for a in wa]).reshape(C, G)

    acc = np.zeros((B, C, G), dtype=np.int64)
    for ib in np.unique(xb):
        for wb_ in np.unique(wb):
            bi, gi = np.nonzero(xb == ib)
            for c in range(C):
                sel = wb[c, gi] == wb_
                if not np.any(sel):
                    continue
                rows, grp = bi[sel], gi[sel]
                acc[rows, c, grp] = fused_mac(xi[rows, grp], wi[c, grp], int(ib) + 1, int(wb_) + 1)
    scale = xs[:, None, :] + ws[None, :, :]
    out = np.ldexp(acc.astype(np.float64), scale).sum(axis=-1)
    return MatmulResult(out, xb, wb)
