from fractions import Fraction

import pytest

from fp8dcim.fp8 import ALL_FORMATS


def oracle_value(byte: int, exp_bits: int):
    """Exact rational value of an FP8 byte straight from the bit-field definition.

    Returns None for encodings the special-value policy marks non-finite.
    """
    man_bits = 7 - exp_bits
    bias = 2 ** (exp_bits - 1) - 1
    s = byte >> 7
    e = (byte >> man_bits) & (2**exp_bits - 1)
    f = byte & (2**man_bits - 1)
    if exp_bits == 5 and e == 31:
        return None
    if exp_bits == 4 and e == 15 and f == 2**man_bits - 1:
        return None
    if e == 0:
        mag = Fraction(f, 2**man_bits) * Fraction(2) ** (1 - bias)
    else:
        mag = (1 + Fraction(f, 2**man_bits)) * Fraction(2) ** (e - bias)
    return -mag if s else mag


@pytest.fixture(params=ALL_FORMATS, ids=lambda f: f.name)
def fmt(request):
    return request.param


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def _record(number: int, title: str, ok: bool, detail: str = "") -> None:
        status = "PASS" if ok else "FAIL"
        _ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")))

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
