"""FIFO-based input alignment unit (FIAU).

Mantissas are written MSB-first, in two's complement, into a bit FIFO. On
read, ``r_ptr`` holds at the MSB for ``exp_offset + 1`` cycles (repeating
the sign bit, i.e. an arithmetic right shift) and then walks toward the
LSB. After ``save_len`` emitted bits the read pointer jumps to ``w_ptr``.
The result is a floor (truncating) alignment; no rounding bit is injected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MAX_WIDTH = 12


def _check(w_in: int, exp_offset: int, save_len: int) -> None:
    if not 1 <= save_len <= MAX_WIDTH:
        raise ConfigError(f"save_len {save_len} outside 1..{MAX_WIDTH}")
    if not 1 <= w_in <= MAX_WIDTH:
        raise ConfigError(f"mantissa width {w_in} outside 1..{MAX_WIDTH}")
    if exp_offset < 0:
        raise ConfigError("exp_offset must be non-negative")


def _check_fits(mantissa: int, w_in: int) -> None:
    lo, hi = -(1 << (w_in - 1)), (1 << (w_in - 1)) - 1
    if not lo <= mantissa <= hi:
        raise ConfigError(f"mantissa {mantissa} does not fit {w_in}-bit two's complement")


def to_signed(bits: int, width: int) -> int:
    bits &= (1 << width) - 1
    return bits - (1 << width) if bits >> (width - 1) else bits


def fiau_align(mantissa: int, w_in: int, exp_offset: int, save_len: int) -> int:
    """Closed form of the pointer scheme: top ``save_len`` bits of ``mantissa >> exp_offset``.

    Returned as a signed integer that fits ``save_len``-bit two's complement.
    """
    _check(w_in, exp_offset, save_len)
    _check_fits(mantissa, w_in)
    drop = w_in + exp_offset - save_len
    return mantissa >> drop if drop >= 0 else mantissa << -drop


@dataclass
class FiauStream:
    """Cycle-stepped FIFO with explicit read/write pointers.

    Pointers are absolute bit positions; the FIFO never wraps because only
    one mantissa is in flight at a time.
    """

    fifo: list = field(default_factory=list)
    w_ptr: int = 0
    r_ptr: int = 0
    cycles: int = 0
    trace: list = field(default_factory=list)
    record: bool = False

    def write(self, mantissa: int, w_in: int) -> None:
        _check_fits(mantissa, w_in)
        pattern = mantissa & ((1 << w_in) - 1)
        for pos in range(w_in - 1, -1, -1):
            self.fifo.append((pattern >> pos) & 1)
            self.w_ptr += 1
            self.cycles += 1

    def read(self, exp_offset: int, save_len: int) -> int:
        """Emit ``save_len`` bits for the mantissa at ``r_ptr`` and return their value."""
        msb = self.r_ptr
        bits = []
        for t in range(save_len):
            if t > exp_offset:
                self.r_ptr += 1
            bit = self.fifo[self.r_ptr] if self.r_ptr < self.w_ptr else 0
            bits.append(bit)
            if self.record:
                self.trace.append((self.cycles, self.w_ptr, self.r_ptr - msb, bit))
            self.cycles += 1
        self.r_ptr = self.w_ptr
        out = 0
        for b in bits:
            out = (out << 1) | b
        return to_signed(out, save_len)

    def dump(self) -> str:
        rows = ["cycle  w_ptr  r_ptr(rel)  bit"]
        rows += [f"{c:5d}  {w:5d}  {r:10d}  {b:3d}" for c, w, r, b in self.trace]
        return "\n".join(rows)


def fiau_align_cycle(mantissa: int, w_in: int, exp_offset: int, save_len: int) -> int:
    """Same result as :func:`fiau_align`, obtained by stepping the FIFO."""
    _check(w_in, exp_offset, save_len)
    s = FiauStream()
    s.write(mantissa, w_in)
    return s.read(exp_offset, save_len)


def fiau_align_group(mantissas, e_max: int, exps, b_g: int, w_in: int) -> np.ndarray:
    """Align a whole group: offset ``e_max - exp``, ``b_g`` magnitude bits plus sign."""
    m = np.asarray(mantissas, dtype=np.int64)
    e = np.asarray(exps, dtype=np.int64)
    save_len = b_g + 1
    _check(w_in, 0, save_len)
    if np.any(e > e_max):
        raise ConfigError("element exponent exceeds the group maximum")
    lo, hi = -(1 << (w_in - 1)), (1 << (w_in - 1)) - 1
    if np.any((m < lo) | (m > hi)):
        raise ConfigError(f"mantissa does not fit {w_in}-bit two's complement")
    drop = w_in + (e_max - e) - save_len
    return np.where(drop >= 0, m >> np.clip(drop, 0, 62), m << np.clip(-drop, 0, 62))


def fiau_latency(w_in: int, save_lens) -> int:
    """Serial cycles to write and read a stream of mantissas (metadata only)."""
    return sum(w_in + s for s in save_lens)
