"""Analytic throughput / energy-efficiency model of the macro.

Throughput scales as ``t_const / (I * W)`` with I and W the average aligned
input/weight widths including the sign bit. Energy per FLOP is affine in
``I * W``, plus a constant MPU overhead when dynamic prediction is on:

    1 / efficiency = e_a * I * W + e_b (+ e_mpu)

``e_a`` and ``e_b`` go exactly through the two fixed-bitwidth rows of the
post-layout table; ``e_mpu`` is fitted to the "Precise" dynamic row. The
"Efficient" row is held out.

All reference rows were measured at 50% weight sparsity and 50% input
toggle rate; the model does not extrapolate to other activity levels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

MODES = ("fixed-fp", "dynamic-fp", "int")
CALIBRATION_CONDITIONS = "50% weight sparsity, 50% input toggle rate"


@dataclass(frozen=True)
class TableRow:
    name: str
    avg_i: float
    avg_w: float
    k: float | None
    b_fix: tuple | None  # (input, weight)
    throughput: float  # TFLOPs (TOPs for INT rows)
    efficiency: float  # TFLOPS/W (TOPS/W for INT rows)
    mode: str


# Post-layout throughput / efficiency of the 28nm macro.
REFERENCE_POINTS = (
    TableRow("E5M3", 4, 4, 0, (3, 3), 0.192, 77.9, "fixed-fp"),
    TableRow("E5M7", 8, 8, 0, (7, 7), 0.048, 20.4, "fixed-fp"),
    TableRow("INT4", 4, 4, None, None, 0.192, 109.3, "int"),
    TableRow("INT8", 8, 8, None, None, 0.048, 27.3, "int"),
    TableRow("Precise", 7.65, 6.61, 1, (6, 5), 0.061, 22.5, "dynamic-fp"),
    TableRow("Efficient", 5.58, 6.08, 2, (4, 4), 0.092, 33.7, "dynamic-fp"),
)


@dataclass(frozen=True)
class PerfCalibration:
    t_const: float
    e_a: float
    e_b: float
    e_mpu: float
    int_table: dict = field(default_factory=dict)  # bits -> (throughput, efficiency)

    def to_text(self) -> str:
        lines = [
            "# fp8dcim performance calibration",
            f"# conditions: {CALIBRATION_CONDITIONS}",
            f"t_const = {self.t_const!r}",
            f"e_a = {self.e_a!r}",
            f"e_b = {self.e_b!r}",
            f"e_mpu = {self.e_mpu!r}",
        ]
        for bits, (t, e) in sorted(self.int_table.items()):
            lines.append(f"int{bits}_throughput = {t!r}")
            lines.append(f"int{bits}_efficiency = {e!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PerfCalibration":
        kv = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"calibration line {n}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                kv[key] = float(val)
            except ValueError:
                raise ConfigError(f"calibration line {n}: {val!r} is not a number") from None
        missing = {"t_const", "e_a", "e_b", "e_mpu"} - kv.keys()
        if missing:
            raise ConfigError(f"calibration missing keys: {', '.join(sorted(missing))}")
        ints = {}
        for key in kv:
            if key.startswith("int") and key.endswith("_throughput"):
                bits = int(key[3:-len("_throughput")])
                ints[bits] = (kv[key], kv[f"int{bits}_efficiency"])
        return cls(kv["t_const"], kv["e_a"], kv["e_b"], kv["e_mpu"], ints)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PerfCalibration":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class PerfReport:
    avg_i: float
    avg_w: float
    throughput: float
    efficiency: float
    mode: str

    def as_dict(self) -> dict:
        return asdict(self)


def calibrate(rows=REFERENCE_POINTS, tolerance: float = 0.01) -> PerfCalibration:
    fixed = [r for r in rows if r.mode == "fixed-fp"]
    dynamic = [r for r in rows if r.mode == "dynamic-fp"]
    if len(fixed) < 2 or not dynamic:
        raise ConfigError("calibration needs two fixed-FP rows and one dynamic row")
    lo, hi = sorted(fixed, key=lambda r: r.avg_i * r.avg_w)[:2]
    p_lo, p_hi = lo.avg_i * lo.avg_w, hi.avg_i * hi.avg_w
    t_lo, t_hi = lo.throughput * p_lo, hi.throughput * p_hi
    if abs(t_lo - t_hi) > tolerance * max(t_lo, t_hi):
        raise ConfigError(f"fixed rows disagree on the throughput constant ({t_lo} vs {t_hi})")
    t_const = t_lo

    e_a = (1 / hi.efficiency - 1 / lo.efficiency) / (p_hi - p_lo)
    e_b = 1 / lo.efficiency - e_a * p_lo
    ref = next((r for r in dynamic if r.name == "Precise"), dynamic[0])
    e_mpu = 1 / ref.efficiency - (e_a * ref.avg_i * ref.avg_w + e_b)
    ints = {int(r.avg_i): (r.throughput, r.efficiency) for r in rows if r.mode == "int"}
    return PerfCalibration(t_const, e_a, e_b, e_mpu, ints)


DEFAULT_CALIBRATION = calibrate()


def estimate(avg_i: float, avg_w: float, mode: str = "fixed-fp", cal: PerfCalibration = DEFAULT_CALIBRATION) -> PerfReport:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if mode == "int":
        if avg_i != avg_w or int(avg_i) not in cal.int_table or avg_i != int(avg_i):
            raise ConfigError(f"no INT entry for {avg_i}/{avg_w} bits")
        t, e = cal.int_table[int(avg_i)]
        return PerfReport(avg_i, avg_w, t, e, mode)
    if not 2 <= avg_i <= 12:
        raise ConfigError(f"average input width {avg_i} outside 2..12")
    if not 2 <= avg_w <= 8:
        raise ConfigError(f"average weight width {avg_w} outside 2..8")
    p = avg_i * avg_w
    energy = cal.e_a * p + cal.e_b
    if mode == "dynamic-fp":
        energy += cal.e_mpu
    return PerfReport(avg_i, avg_w, cal.t_const / p, 1 / energy, mode)
