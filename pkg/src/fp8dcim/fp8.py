"""FP8 minifloat codec for the four 1-sign/7-payload-bit formats (E2M5 .. E5M2).

Special-value policy:

* E5M2 keeps IEEE-style Inf/NaN in the all-ones exponent.
* E4M3 reserves only ``S.1111.111`` as NaN (OCP ``fn`` convention).
* E2M5 and E3M4 have no special encodings.

The compute datapath has no way to carry Inf/NaN, so decoding one raises
:class:`~fp8dcim.errors.NonFiniteError`.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigError, NonFiniteError


@dataclass(frozen=True)
class Fp8Format:
    exp_bits: int

    def __post_init__(self):
        if self.exp_bits not in (2, 3, 4, 5):
            raise ConfigError(f"unsupported FP8 format with {self.exp_bits} exponent bits")

    @property
    def mant_bits(self) -> int:
        return 7 - self.exp_bits

    @property
    def bias(self) -> int:
        return (1 << (self.exp_bits - 1)) - 1

    @property
    def name(self) -> str:
        return f"E{self.exp_bits}M{self.mant_bits}"

    @property
    def max_exp_field(self) -> int:
        """Largest biased exponent field that still encodes finite values."""
        top = (1 << self.exp_bits) - 1
        return top - 1 if self.exp_bits == 5 else top

    @property
    def max_code(self) -> int:
        """Bit pattern (sign clear) of the largest finite magnitude."""
        if self.exp_bits == 5:
            return 0x7B
        if self.exp_bits == 4:
            return 0x7E
        return 0x7F

    @property
    def max_finite(self) -> float:
        return _tables(self.exp_bits).value[self.max_code]

    def is_finite(self, byte: int) -> bool:
        return bool(_tables(self.exp_bits).finite[byte & 0xFF])

    @classmethod
    def parse(cls, text: str) -> "Fp8Format":
        """Accept ``"E4M3"``, ``"e4m3"`` or a bare exponent width ``"4"``."""
        t = text.strip().upper()
        if t.isdigit():
            return cls(int(t))
        for f in ALL_FORMATS:
            if f.name == t:
                return f
        raise ConfigError(f"unknown FP8 format {text!r}")

    def __str__(self) -> str:
        return self.name


E2M5 = Fp8Format(2)
E3M4 = Fp8Format(3)
E4M3 = Fp8Format(4)
E5M2 = Fp8Format(5)
ALL_FORMATS = (E2M5, E3M4, E4M3, E5M2)


@dataclass(frozen=True)
class DecodedFp8:
    """Sign, biased exponent field and significand of one finite FP8 value.

    ``sig`` includes the hidden leading one for normal values, so
    ``value = sign * sig * 2**(e_eff - mant_bits)`` with ``e_eff`` equal to
    ``e_raw - bias`` (normals) or ``1 - bias`` (subnormals and zero).
    """

    sign: int
    e_raw: int
    sig: int
    is_zero: bool

    @property
    def is_subnormal(self) -> bool:
        return self.e_raw == 0

    @property
    def e_align(self) -> int:
        """Biased exponent that actually scales ``sig`` (subnormals share field 1)."""
        return max(self.e_raw, 1)


class _Tables:
    """Per-format decode tables indexed by the raw byte."""

    def __init__(self, exp_bits: int):
        fmt = Fp8Format(exp_bits)
        m = fmt.mant_bits
        codes = np.arange(256)
        self.sign = np.where(codes & 0x80, -1, 1).astype(np.int64)
        self.e_raw = ((codes >> m) & ((1 << exp_bits) - 1)).astype(np.int64)
        frac = codes & ((1 << m) - 1)
        self.sig = np.where(self.e_raw > 0, frac | (1 << m), frac).astype(np.int64)
        self.e_align = np.maximum(self.e_raw, 1)

        finite = np.ones(256, dtype=bool)
        if exp_bits == 5:
            finite &= self.e_raw != 31
        elif exp_bits == 4:
            finite &= (codes & 0x7F) != 0x7F
        self.finite = finite

        value = np.ldexp(self.sig.astype(np.float64), (self.e_align - fmt.bias - m).astype(np.int32))
        value = np.copysign(value, self.sign.astype(np.float64))
        value[~finite] = np.nan
        self.value = value
        # positive finite grid: index == code for codes 0..max_code
        self.grid = [float(v) for v in value[: fmt.max_code + 1]]
        self.grid_np = np.asarray(self.grid)


@lru_cache(maxsize=None)
def _tables(exp_bits: int) -> _Tables:
    return _Tables(exp_bits)


def decode(byte: int, fmt: Fp8Format) -> DecodedFp8:
    byte = int(byte)
    if not 0 <= byte <= 0xFF:
        raise ValueError(f"byte {byte} is not an 8-bit pattern")
    t = _tables(fmt.exp_bits)
    if not t.finite[byte]:
        raise NonFiniteError(f"non-finite {fmt.name} encoding 0x{byte:02X}")
    sig = int(t.sig[byte])
    return DecodedFp8(sign=int(t.sign[byte]), e_raw=int(t.e_raw[byte]), sig=sig, is_zero=sig == 0)


def to_real(d: DecodedFp8, fmt: Fp8Format) -> float:
    mag = math.ldexp(d.sig, d.e_align - fmt.bias - fmt.mant_bits)
    return math.copysign(mag, d.sign)


def encode(value: float, fmt: Fp8Format) -> int:
    """Round-to-nearest-even, saturating to the largest finite magnitude."""
    value = float(value)
    if math.isnan(value):
        raise NonFiniteError("cannot encode NaN")
    if math.isinf(value):
        raise NonFiniteError("cannot encode an infinite value")
    sign_bit = 0x80 if math.copysign(1.0, value) < 0 else 0
    grid = _tables(fmt.exp_bits).grid
    mag = abs(value)
    if mag >= grid[-1]:
        return sign_bit | fmt.max_code
    hi = bisect.bisect_left(grid, mag)
    if grid[hi] == mag:
        return sign_bit | hi
    lo = hi - 1
    mid = (grid[lo] + grid[hi]) / 2
    if mag < mid:
        code = lo
    elif mag > mid:
        code = hi
    else:
        code = lo if lo % 2 == 0 else hi
    return sign_bit | code


def encode_array(values, fmt: Fp8Format) -> np.ndarray:
    """Vectorised :func:`encode`; returns ``uint8`` codes with the input's shape."""
    x = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x.ravel()))[0])
        raise NonFiniteError(f"non-finite value at index {bad}")
    grid = _tables(fmt.exp_bits).grid_np
    mag = np.abs(x)
    hi = np.searchsorted(grid, mag, side="left")
    hi = np.minimum(hi, len(grid) - 1)
    lo = np.maximum(hi - 1, 0)
    mid = (grid[lo] + grid[hi]) / 2
    pick_hi = (mag > mid) | ((mag == mid) & (lo % 2 == 1))
    code = np.where(grid[hi] == mag, hi, np.where(pick_hi, hi, lo))
    code = np.where(mag >= grid[-1], fmt.max_code, code)
    code = code | np.where(np.signbit(x), 0x80, 0)
    return code.astype(np.uint8)


def decode_table(fmt: Fp8Format) -> np.ndarray:
    """Real value of every byte (NaN where the encoding is non-finite)."""
    return _tables(fmt.exp_bits).value.copy()


@dataclass(frozen=True, eq=False)
class Fp8Tensor:
    """FP8 codes plus their format; exposes sign / exponent / significand planes.

    The reduction axis for grouping is the last dimension.
    """

    codes: np.ndarray
    fmt: Fp8Format

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.dtype != np.uint8:
            if codes.size and (codes.min() < 0 or codes.max() > 255):
                raise ValueError("codes must be 8-bit patterns")
            codes = codes.astype(np.uint8)
        codes = codes.copy()
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)
        finite = _tables(self.fmt.exp_bits).finite[codes]
        if not np.all(finite):
            bad = int(np.flatnonzero(~finite.ravel())[0])
            raise NonFiniteError(
                f"non-finite {self.fmt.name} encoding 0x{int(codes.ravel()[bad]):02X} at index {bad}"
            )

    @classmethod
    def from_real(cls, values, fmt: Fp8Format) -> "Fp8Tensor":
        return cls(encode_array(values, fmt), fmt)

    @property
    def shape(self) -> tuple:
        return self.codes.shape

    @property
    def size(self) -> int:
        return int(self.codes.size)

    @cached_property
    def sign(self) -> np.ndarray:
        return _tables(self.fmt.exp_bits).sign[self.codes]

    @cached_property
    def e_raw(self) -> np.ndarray:
        return _tables(self.fmt.exp_bits).e_raw[self.codes]

    @cached_property
    def e_align(self) -> np.ndarray:
        return _tables(self.fmt.exp_bits).e_align[self.codes]

    @cached_property
    def sig(self) -> np.ndarray:
        return _tables(self.fmt.exp_bits).sig[self.codes]

    def to_real(self) -> np.ndarray:
        return _tables(self.fmt.exp_bits).value[self.codes]

    def reshape(self, *shape) -> "Fp8Tensor":
        return Fp8Tensor(self.codes.reshape(*shape), self.fmt)

    def __getitem__(self, idx) -> "Fp8Tensor":
        return Fp8Tensor(np.atleast_1d(self.codes[idx]), self.fmt)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fp8Tensor):
            return NotImplemented
        return self.fmt == other.fmt and self.shape == other.shape and bool(np.array_equal(self.codes, other.codes))

    def __len__(self) -> int:
        return len(self.codes)
