"""F8T container plus real-valued tensor import.

F8T layout (little-endian)::

    b"F8T1" | u8 exp_bits | u32 rank | rank x u32 dims | prod(dims) FP8 bytes

Payload is row-major; the last dimension is the reduction axis.
"""

from __future__ import annotations

import csv
import struct
import warnings
from pathlib import Path

import numpy as np

from .errors import BadMagicError, EmptyTensorError, F8TFormatError, NonFiniteError, TruncatedError
from .fp8 import Fp8Format, Fp8Tensor, encode_array

MAGIC = b"F8T1"


def dumps_f8t(tensor: Fp8Tensor) -> bytes:
    dims = tensor.shape
    header = MAGIC + struct.pack("<BI", tensor.fmt.exp_bits, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    return header + tensor.codes.tobytes(order="C")


def loads_f8t(data: bytes) -> Fp8Tensor:
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 9:
        raise TruncatedError("header truncated")
    code, rank = struct.unpack_from("<BI", data, 4)
    if code not in (2, 3, 4, 5):
        raise F8TFormatError(f"unknown format code {code}")
    if rank == 0:
        raise EmptyTensorError("empty tensor (rank 0)")
    off = 9 + 4 * rank
    if len(data) < off:
        raise TruncatedError("dimension list truncated")
    dims = struct.unpack_from(f"<{rank}I", data, 9)
    count = int(np.prod(dims, dtype=np.int64))
    if count == 0:
        raise EmptyTensorError(f"empty tensor (dims {dims})")
    payload = data[off:]
    if len(payload) < count:
        raise TruncatedError(f"payload has {len(payload)} bytes, header promises {count}")
    if len(payload) > count:
        raise F8TFormatError(f"{len(payload) - count} trailing bytes after payload")
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    return Fp8Tensor(codes, Fp8Format(code))


def save_f8t(path, tensor: Fp8Tensor) -> None:
    Path(path).write_bytes(dumps_f8t(tensor))


def load_f8t(path) -> Fp8Tensor:
    return loads_f8t(Path(path).read_bytes())


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            cells = [c.strip() for c in row if c.strip()]
            if cells:
                rows.append([float(c) for c in cells])
    if not rows:
        raise EmptyTensorError(f"{path}: no numbers found")
    if len(rows) == 1:
        return np.asarray(rows[0])
    if len({len(r) for r in rows}) != 1:
        return np.asarray([v for r in rows for v in r])
    return np.asarray(rows)


def import_real(path, fmt: Fp8Format, shape: tuple | None = None) -> Fp8Tensor:
    """Quantise a CSV (``.csv``/``.txt``) or raw little-endian float32 file to FP8.

    Values beyond the format's range saturate with a warning.
    """
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        values = _read_csv(path)
    else:
        raw = path.read_bytes()
        if len(raw) % 4:
            raise TruncatedError(f"{path}: raw float32 stream length {len(raw)} is not a multiple of 4")
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if values.size == 0:
            raise EmptyTensorError(f"{path}: empty stream")
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise NonFiniteError(f"{path}: non-finite value at index {idx}")
    if shape is not None:
        values = values.reshape(shape)
    n_sat = int(np.count_nonzero(np.abs(values) > fmt.max_finite))
    if n_sat:
        warnings.warn(f"{n_sat} value(s) exceed {fmt.name} max {fmt.max_finite} and were saturated", stacklevel=2)
    return Fp8Tensor(encode_array(values, fmt), fmt)
