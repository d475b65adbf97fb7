"""Bit-exact model of a variable-aligned-mantissa FP8 digital CIM macro."""

from .dsbp import DsbpConfig, GroupAlignment, align_group, partition, predict_bitwidth, quantize_tensor, sqnr
from .fp8 import ALL_FORMATS, E2M5, E3M4, E4M3, E5M2, DecodedFp8, Fp8Format, Fp8Tensor, decode, encode, to_real
from .mac import ArrayConfig, MacArray, decompose_weight, fp_macro_mac, fused_mac, macro_matmul
from .perf import PerfCalibration, PerfReport, calibrate, estimate

__all__ = [
    "ALL_FORMATS", "E2M5", "E3M4", "E4M3", "E5M2", "DecodedFp8", "Fp8Format", "Fp8Tensor",
    "decode", "encode", "to_real",
    "DsbpConfig", "GroupAlignment", "align_group", "partition", "predict_bitwidth", "quantize_tensor", "sqnr",
    "ArrayConfig", "MacArray", "decompose_weight", "fp_macro_mac", "fused_mac", "macro_matmul",
    "PerfCalibration", "PerfReport", "calibrate", "estimate",
]
__version__ = "0.1.0"
