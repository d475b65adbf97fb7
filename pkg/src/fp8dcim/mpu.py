"""Fixed-point model of the mantissa prediction unit (MPU).

Three pipeline stages:

1. per-element shifters produce ``shift >> shift`` and ``1 >> shift`` in
   unsigned fixed point with ``frac_bits`` fractional bits;
2. two exact adder trees sum numerator and denominator terms;
3. the denominator is normalised by leading-one detection, its top 8
   fractional bits index a reciprocal table, and the quotient is scaled by
   ``k`` (2 fractional bits), offset by ``b_fix``, saturated to 5 bits,
   rounded up and clamped to the input bitwidth range 1..11.

Shifts larger than ``frac_bits`` underflow both terms to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigError

PIPELINE_STAGES = 3
K_FRAC_BITS = 2
# fractional bits kept on the numerator x reciprocal product
QUOT_FRAC_BITS = 10


@dataclass(frozen=True)
class MpuConfig:
    k_fx: int = 4
    b_fix: int = 0
    frac_bits: int = 15
    lut_bits: int = 8
    sat_bits: int = 5

    def __post_init__(self):
        if self.lut_bits != 8:
            raise ConfigError("the MPU reciprocal table is 8 bits wide")
        if self.sat_bits != 5:
            raise ConfigError("the MPU output saturates to 5 bits")
        if self.k_fx < 0 or self.k_fx >= 1 << 8:
            raise ConfigError(f"k_fx {self.k_fx} does not fit the multiplier")
        if self.b_fix < 0 or self.b_fix >= 1 << self.sat_bits:
            raise ConfigError(f"b_fix {self.b_fix} does not fit {self.sat_bits} bits")
        if not 1 <= self.frac_bits <= 30:
            raise ConfigError("frac_bits must be in 1..30")

    @classmethod
    def from_k(cls, k, b_fix: int, **kw) -> "MpuConfig":
        k4 = Fraction(k) * (1 << K_FRAC_BITS)
        if k4.denominator != 1 or k4 < 0:
            raise ConfigError(f"k={k} is not representable with {K_FRAC_BITS} fractional bits")
        return cls(k_fx=int(k4), b_fix=int(b_fix), **kw)

    @property
    def k(self) -> Fraction:
        return Fraction(self.k_fx, 1 << K_FRAC_BITS)


@dataclass
class MpuTrace:
    stage1_num_terms: list
    stage1_den_terms: list
    stage2_num: int
    stage2_den: int
    lut_index: int = 0
    stage3_recip: int = 0
    result_pre_sat: int = 0
    b_g: int = 0
    underflow: bool = False
    latency_cycles: int = PIPELINE_STAGES
    frac_bits: int = field(default=15, repr=False)

    def dump(self) -> str:
        """Human-readable stage listing."""
        f = self.frac_bits
        lines = [
            f"stage1 num terms (Q.{f}): {self.stage1_num_terms}",
            f"stage1 den terms (Q.{f}): {self.stage1_den_terms}",
            f"stage2 num = {self.stage2_num} ({self.stage2_num / (1 << f):.6g})",
            f"stage2 den = {self.stage2_den} ({self.stage2_den / (1 << f):.6g})",
            f"stage3 lut[{self.lut_index}] = {self.stage3_recip} ({self.stage3_recip / 256:.6g})",
            f"stage3 pre-saturation (Q.{QUOT_FRAC_BITS + K_FRAC_BITS}) = {self.result_pre_sat}"
            f" ({self.result_pre_sat / (1 << (QUOT_FRAC_BITS + K_FRAC_BITS)):.6g})",
            f"b_g = {self.b_g}" + ("  [denominator underflow, fell back to b_fix]" if self.underflow else ""),
        ]
        return "\n".join(lines)


@lru_cache(maxsize=None)
def build_reciprocal_lut(lut_bits: int = 8) -> tuple:
    """Reciprocal of a normalised mantissa, sampled at the bin centre.

    Entry ``i`` covers ``m`` in ``[1 + i/256, 1 + (i+1)/256)`` and stores
    ``round(256 / m_mid)`` saturated to 255, so the code reads as a Q0.8
    value in ``[0.5, 1)``.
    """
    if lut_bits != 8:
        raise ConfigError("only the 8-bit table is modelled")
    n = 1 << lut_bits
    table = []
    for i in range(n):
        # exact rational round-half-up of n / (1 + (i + 0.5)/n) = 2 n^2 / (2n + 2i + 1)
        num, den = 2 * n * n, 2 * n + 2 * i + 1
        code = (2 * num + den) // (2 * den)
        table.append(min(code, n - 1))
    return tuple(table)


def lut_reciprocal(m: float) -> float:
    """Table reciprocal of ``m`` in ``[1, 2)`` as a real number."""
    if not 1.0 <= m < 2.0:
        raise ValueError("mantissa must lie in [1, 2)")
    idx = int((m - 1.0) * 256)
    return build_reciprocal_lut()[idx] / 256


def _stage3(num: int, den: int, cfg: MpuConfig) -> tuple[int, int, int, int]:
    """Return ``(lut_index, recip_code, pre_sat, b_g)`` for one group."""
    p = den.bit_length() - 1
    idx = ((den << 8) >> p) & 0xFF
    recip = build_reciprocal_lut()[idx]
    # num / den ~= num * recip / 2**(p + 8)
    q = (num * recip << QUOT_FRAC_BITS) >> (p + 8)
    pre_sat = q * cfg.k_fx + (cfg.b_fix << (QUOT_FRAC_BITS + K_FRAC_BITS))
    frac = QUOT_FRAC_BITS + K_FRAC_BITS
    pre_sat = min(pre_sat, ((1 << cfg.sat_bits) - 1) << frac)
    ceil = -((-pre_sat) >> frac)
    return idx, recip, pre_sat, min(max(ceil, 1), 11)


def _clamp_bfix(b_fix: int) -> int:
    return min(max(b_fix, 1), 11)


def mpu_predict(shifts, cfg: MpuConfig) -> tuple[int, MpuTrace]:
    """Predict an input group's aligned bitwidth the way the MPU does."""
    shifts = [int(s) for s in shifts]
    if not shifts:
        raise ConfigError("empty group")
    if any(s < 0 for s in shifts):
        raise ConfigError("shifts must be non-negative")
    f = cfg.frac_bits
    one = 1 << f
    num_terms = [((s << f) >> s) if s <= f else 0 for s in shifts]
    den_terms = [(one >> s) if s <= f else 0 for s in shifts]
    num, den = sum(num_terms), sum(den_terms)
    trace = MpuTrace(num_terms, den_terms, num, den, frac_bits=f)
    if den == 0:
        trace.underflow = True
        trace.b_g = _clamp_bfix(cfg.b_fix)
        return trace.b_g, trace
    trace.lut_index, trace.stage3_recip, trace.result_pre_sat, trace.b_g = _stage3(num, den, cfg)
    return trace.b_g, trace


def mpu_stage2_batch(shifts: np.ndarray, frac_bits: int = 15) -> tuple[np.ndarray, np.ndarray]:
    """Stages 1-2 over a ``(n, rows)`` batch of shift vectors."""
    s = np.asarray(shifts, dtype=np.int64)
    if np.any(s < 0):
        raise ConfigError("shifts must be non-negative")
    live = s <= frac_bits
    sc = np.where(live, s, 0)
    num = np.where(live, (sc << frac_bits) >> sc, 0).sum(axis=-1)
    den = np.where(live, (1 << frac_bits) >> sc, 0).sum(axis=-1)
    return num, den


def mpu_quotient_batch(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Stage-3 quotient ``num/den`` in Q.QUOT_FRAC_BITS, vectorised."""
    num = np.asarray(num, dtype=np.int64)
    den = np.asarray(den, dtype=np.int64)
    safe = np.maximum(den, 1)
    _, e = np.frexp(safe.astype(np.float64))
    p = e.astype(np.int64) - 1
    idx = ((safe << 8) >> p) & 0xFF
    recip = np.asarray(build_reciprocal_lut(), dtype=np.int64)[idx]
    return ((num * recip) << QUOT_FRAC_BITS) >> (p + 8)


def mpu_finish_batch(q: np.ndarray, den: np.ndarray, cfg: MpuConfig) -> np.ndarray:
    frac = QUOT_FRAC_BITS + K_FRAC_BITS
    pre = q * cfg.k_fx + (cfg.b_fix << frac)
    pre = np.minimum(pre, ((1 << cfg.sat_bits) - 1) << frac)
    ceil = -((-pre) >> frac)
    b = np.clip(ceil, 1, 11)
    return np.where(np.asarray(den) == 0, _clamp_bfix(cfg.b_fix), b)


def mpu_predict_batch(shifts: np.ndarray, cfg: MpuConfig) -> np.ndarray:
    """Vectorised :func:`mpu_predict` (bitwidths only) over the leading axes."""
    num, den = mpu_stage2_batch(shifts, cfg.frac_bits)
    return mpu_finish_batch(mpu_quotient_batch(num, den), den, cfg)


def exact_bitwidth(shifts, k, b_fix: int) -> int:
    """Real-arithmetic bitwidth ``ceil(k * ratio + b_fix)`` clamped to 1..11."""
    shifts = [int(s) for s in shifts]
    top = max(shifts)
    num = sum(s << (top - s) for s in shifts)
    den = sum(1 << (top - s) for s in shifts)
    val = Fraction(k) * Fraction(num, den) + b_fix
    return min(max(-((-val.numerator) // val.denominator), 1), 11)
