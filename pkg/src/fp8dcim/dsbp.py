"""Exact reference for dynamic shift-aware bitwidth prediction (DSBP).

Everything here is integer or rational arithmetic, so the results serve as
the golden model for the fixed-point MPU and the pointer-based FIAU.

Alignment convention: the element holding the group's largest exponent
fills exactly ``b_g`` magnitude bits, and one sign bit is added on top, so
an aligned weight with ``b_g`` in {1, 3, 5, 7} occupies a 2/4/6/8-bit
two's-complement container. ``literal_alg1=True`` instead keeps one extra
magnitude bit, scaling by ``2**(b_g - mant_bits - shift)`` as the textbook
formula is written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .fp8 import Fp8Format, Fp8Tensor

WEIGHT_BITWIDTHS = (1, 3, 5, 7)
INPUT_BITWIDTHS = tuple(range(1, 12))
ROUNDING_MODES = ("nearest", "truncate")


@dataclass(frozen=True)
class DsbpConfig:
    """Hyperparameters of one operand's bitwidth predictor.

    ``k`` accepts any non-negative value that is a multiple of 1/4, matching
    the two fractional bits of the MPU multiplier.
    """

    k: Fraction = Fraction(0)
    b_fix: int = 7
    kind: str = "weight"
    group_size: int = 64

    def __post_init__(self):
        k = Fraction(self.k)
        if k < 0 or (k * 4).denominator != 1:
            raise ConfigError(f"k must be a non-negative multiple of 1/4, got {self.k}")
        object.__setattr__(self, "k", k)
        if self.kind not in ("weight", "input"):
            raise ConfigError(f"kind must be 'weight' or 'input', got {self.kind!r}")
        if int(self.b_fix) != self.b_fix or self.b_fix < 0:
            raise ConfigError(f"b_fix must be a non-negative integer, got {self.b_fix}")
        object.__setattr__(self, "b_fix", int(self.b_fix))
        if self.group_size <= 0:
            raise ConfigError("group size must be positive")

    @property
    def valid_bitwidths(self) -> tuple:
        return WEIGHT_BITWIDTHS if self.kind == "weight" else INPUT_BITWIDTHS

    @property
    def is_fixed(self) -> bool:
        return self.k == 0


def round_to_valid(x, kind: str) -> int:
    """Snap a real bitwidth to the hardware search space.

    Weights go to the nearest of 1/3/5/7 with ties (2, 4, 6) resolved upward;
    inputs are rounded up and clamped to 1..11.
    """
    x = Fraction(x)
    if kind == "weight":
        return min(WEIGHT_BITWIDTHS, key=lambda c: (abs(x - c), -c))
    if kind == "input":
        return min(max(math.ceil(x), 1), 11)
    raise ConfigError(f"unknown operand kind {kind!r}")


@dataclass(frozen=True)
class ShiftProfile:
    shifts: tuple

    @property
    def weights(self) -> tuple:
        return tuple(Fraction(1, 1 << s) for s in self.shifts)

    def weighted_mean(self) -> Fraction:
        """Exact ``sum(shift * 2**-shift) / sum(2**-shift)``."""
        if not self.shifts:
            raise ConfigError("empty group")
        top = max(self.shifts)
        num = sum(s << (top - s) for s in self.shifts)
        den = sum(1 << (top - s) for s in self.shifts)
        return Fraction(num, den)


def predict_bitwidth(shifts, cfg: DsbpConfig) -> tuple[int, int]:
    """Return ``(b_dyn, b_g)`` for one group's exponent gaps."""
    profile = shifts if isinstance(shifts, ShiftProfile) else ShiftProfile(tuple(int(s) for s in shifts))
    if any(s < 0 for s in profile.shifts):
        raise ConfigError("shifts must be non-negative")
    b_dyn = math.ceil(profile.weighted_mean())
    b_g = round_to_valid(cfg.k * b_dyn + cfg.b_fix, cfg.kind)
    return b_dyn, b_g


@dataclass(frozen=True, eq=False)
class Group:
    """One reduction-axis slice of ``group_size`` elements.

    Padding positions carry ``valid == False`` and are ignored everywhere.
    """

    sign: np.ndarray
    e_raw: np.ndarray
    sig: np.ndarray
    valid: np.ndarray
    fmt: Fp8Format

    @property
    def e_align(self) -> np.ndarray:
        return np.maximum(self.e_raw, 1)

    @property
    def e_max(self) -> int:
        return int(self.e_align[self.valid].max())

    def shift_profile(self) -> ShiftProfile:
        gaps = self.e_max - self.e_align[self.valid]
        return ShiftProfile(tuple(int(s) for s in gaps))

    @property
    def shifts(self) -> np.ndarray:
        """Exponent gap of every position (0 on padding)."""
        return np.where(self.valid, self.e_max - self.e_align, 0)

    def to_real(self) -> np.ndarray:
        m = self.fmt.mant_bits
        vals = np.ldexp((self.sign * self.sig).astype(np.float64), (self.e_align - self.fmt.bias - m).astype(np.int32))
        return np.where(self.valid, vals, 0.0)

    @classmethod
    def from_tensor(cls, t: Fp8Tensor) -> "Group":
        codes = t.codes.ravel()
        return cls(
            sign=t.sign.ravel(), e_raw=t.e_raw.ravel(), sig=t.sig.ravel(),
            valid=np.ones(codes.size, dtype=bool), fmt=t.fmt,
        )

    def __len__(self) -> int:
        return len(self.sig)


def partition(tensor: Fp8Tensor, group_size: int = 64) -> list[Group]:
    """Split every row (last axis) into contiguous groups, zero-padding the tail.

    Groups are returned row-major: all groups of row 0, then row 1, ...
    """
    if group_size <= 0:
        raise ConfigError(f"group size must be positive, got {group_size}")
    if tensor.size == 0:
        raise ConfigError("cannot partition an empty tensor")
    n = tensor.shape[-1] if tensor.codes.ndim else 1
    rows = tensor.size // n
    n_groups = -(-n // group_size)
    padded = n_groups * group_size

    def plane(a, fill):
        a = a.reshape(rows, n)
        out = np.full((rows, padded), fill, dtype=np.int64)
        out[:, :n] = a
        return out.reshape(rows * n_groups, group_size)

    sign, e_raw, sig = plane(tensor.sign, 1), plane(tensor.e_raw, 0), plane(tensor.sig, 0)
    valid = np.zeros((rows, padded), dtype=bool)
    valid[:, :n] = True
    valid = valid.reshape(rows * n_groups, group_size)
    return [Group(sign[i], e_raw[i], sig[i], valid[i], tensor.fmt) for i in range(rows * n_groups)]


@dataclass(frozen=True, eq=False)
class GroupAlignment:
    """Aligned signed integers of one group; ``value_i ~= aligned[i] * 2**scale_exp``."""

    e_max: int
    b_g: int
    aligned: np.ndarray
    scale_exp: int
    valid: np.ndarray
    b_dyn: int | None = None
    shifts: np.ndarray = field(default=None, repr=False)

    def reconstruct(self) -> np.ndarray:
        return np.ldexp(self.aligned.astype(np.float64), self.scale_exp)


def _scale_integers(signed_sig: np.ndarray, exponent: np.ndarray, rounding: str) -> np.ndarray:
    """``round(signed_sig * 2**exponent)`` in exact integer arithmetic."""
    signed_sig = signed_sig.astype(np.int64)
    up = np.clip(exponent, 0, 62)
    down = np.clip(-exponent, 0, 62)
    if rounding == "truncate":
        shrunk = signed_sig >> down
    else:
        mag = np.abs(signed_sig)
        half = np.where(down > 0, np.left_shift(1, np.maximum(down - 1, 0)), 0)
        shrunk = np.sign(signed_sig) * ((mag + half) >> down)
    return np.where(exponent >= 0, signed_sig << up, shrunk)


def align_group(
    group: Group,
    b_g: int,
    rounding: str = "nearest",
    literal_alg1: bool = False,
    b_dyn: int | None = None,
) -> GroupAlignment:
    """Shift every significand onto the group-max exponent grid at ``b_g`` bits.

    ``rounding="nearest"`` rounds half away from zero and saturates to
    ``+-(2**b_g - 1)``; ``"truncate"`` floors like an arithmetic right shift
    (the FIAU behaviour) and may therefore reach ``-2**b_g``.
    """
    if rounding not in ROUNDING_MODES:
        raise ConfigError(f"unknown rounding mode {rounding!r}")
    if not 1 <= b_g <= 11:
        raise ConfigError(f"aligned bitwidth {b_g} outside 1..11")
    m = group.fmt.mant_bits
    mag_bits = b_g + 1 if literal_alg1 else b_g
    shifts = group.shifts
    exponent = (mag_bits - 1) - m - shifts
    aligned = _scale_integers(group.sign * group.sig, exponent, rounding)
    if rounding == "nearest":
        lim = (1 << mag_bits) - 1
        aligned = np.clip(aligned, -lim, lim)
    aligned = np.where(group.valid, aligned, 0)
    e_max = group.e_max
    scale_exp = e_max - group.fmt.bias - (mag_bits - 1)
    return GroupAlignment(
        e_max=e_max, b_g=b_g, aligned=aligned, scale_exp=scale_exp,
        valid=group.valid.copy(), b_dyn=b_dyn, shifts=shifts,
    )


def align_with_config(group: Group, cfg: DsbpConfig, rounding: str = "nearest", literal_alg1: bool = False) -> GroupAlignment:
    b_dyn, b_g = predict_bitwidth(group.shift_profile(), cfg)
    return align_group(group, b_g, rounding=rounding, literal_alg1=literal_alg1, b_dyn=b_dyn)


def quantize_tensor(
    tensor: Fp8Tensor,
    cfg: DsbpConfig,
    rounding: str = "nearest",
    literal_alg1: bool = False,
) -> tuple[list[GroupAlignment], np.ndarray]:
    """Run partition, prediction and alignment over a whole tensor.

    Returns the per-group alignments and the bitwidth tensor, shaped
    ``(*leading_dims, groups_per_row)``.
    """
    groups = partition(tensor, cfg.group_size)
    alignments = [align_with_config(g, cfg, rounding, literal_alg1) for g in groups]
    lead = tensor.shape[:-1] if tensor.codes.ndim > 1 else ()
    bits = np.array([a.b_g for a in alignments], dtype=np.int64).reshape(*lead, -1)
    return alignments, bits


def reconstruct_tensor(alignments: Sequence[GroupAlignment], shape: tuple) -> np.ndarray:
    """Undo partitioning: drop padding and restore the original shape."""
    n = shape[-1] if shape else 1
    rows = int(np.prod(shape)) // n
    flat = np.concatenate([a.reconstruct() for a in alignments]).reshape(rows, -1)
    return flat[:, :n].reshape(shape)


def sqnr(original, reconstructed) -> float:
    """Signal-to-quantisation-noise ratio in dB; ``math.inf`` when lossless."""
    orig = np.asarray(original, dtype=np.float64)
    recon = np.asarray(reconstructed, dtype=np.float64)
    if orig.shape != recon.shape:
        raise ConfigError(f"shape mismatch {orig.shape} vs {recon.shape}")
    signal = float(np.sum(orig * orig))
    if signal == 0.0:
        raise ConfigError("SQNR undefined for an all-zero reference")
    noise = float(np.sum((orig - recon) ** 2))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / noise)
