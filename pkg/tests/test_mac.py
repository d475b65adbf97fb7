import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fp8dcim.dsbp import DsbpConfig, partition, sqnr
from fp8dcim.errors import ConfigError, ShapeMismatchError
from fp8dcim.fp8 import E2M5, E4M3, E5M2, Fp8Tensor
from fp8dcim.mac import (
    ArrayConfig, MacArray, column_mac, decompose_weight, fp_macro_mac, fuse_columns, fused_mac,
    macro_matmul, run_mac_job,
)


def rand_signed(rng, width, shape):
    return rng.integers(-(1 << (width - 1)), 1 << (width - 1), shape)


def finite_tensor(rng, fmt, n):
    codes = rng.integers(0, 256, n)
    return Fp8Tensor(np.where([fmt.is_finite(c) for c in codes], codes, 0).astype(np.uint8), fmt)


def exact_dot(x: Fp8Tensor, w: Fp8Tensor) -> Fraction:
    return sum(Fraction(a) * Fraction(b) for a, b in zip(x.to_real(), w.to_real()))


# -- weight slicing -----------------------------------------------------------------

def test_decompose_zero():
    for width in (2, 4, 6, 8):
        assert decompose_weight(0, width).slices == (0,) * (width // 2)


def test_decompose_minus_one():
    ws = decompose_weight(-1, 8)
    assert ws.slices == (3, 3, 3, -1)
    assert ws.snf == (False, False, False, True)


@pytest.mark.parametrize("width", [2, 4, 6, 8])
def test_decompose_exhaustive(width):
    for w in range(-(1 << (width - 1)), 1 << (width - 1)):
        ws = decompose_weight(w, width)
        assert ws.recompose() == w
        assert len(ws.slices) == width // 2
        assert all(0 <= v <= 3 for v in ws.slices[:-1]) and -2 <= ws.slices[-1] <= 1


def test_decompose_range_checks():
    with pytest.raises(ConfigError):
        decompose_weight(8, 4)
    with pytest.raises(ConfigError):
        decompose_weight(0, 5)


# -- column adder tree --------------------------------------------------------------------

def test_column_mac_examples():
    assert column_mac(np.zeros(64, int), np.full(64, 3), False) == 0
    assert column_mac(np.ones(64, int), np.full(64, 3), False) == 192
    assert column_mac(np.ones(64, int), np.full(64, 2), True) == -128


def test_column_mac_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        b = rng.integers(0, 2, 64)
        c = rng.integers(0, 4, 64)
        for snf in (False, True):
            vals = [(v - 4 if snf and v >= 2 else v) for v in c]
            assert column_mac(b, c, snf) == sum(int(x) * y for x, y in zip(b, vals))


# -- fusion --------------------------------------------------------------------------------

def test_six_bit_path_is_recomposition():
    rng = np.random.default_rng(1)
    for _ in range(500):
        cols = [int(v) for v in rng.integers(-128, 193, 3)]
        assert fuse_columns(cols, 6) == cols[0] + 4 * cols[1] + 16 * cols[2]
    for width in (2, 4, 8):
        cols = [int(v) for v in rng.integers(-128, 193, width // 2)]
        assert fuse_columns(cols, width) == sum(c * 4**j for j, c in enumerate(cols))


@pytest.mark.parametrize("I,W", [(i, w) for i in (2, 5, 12) for w in (2, 4, 6, 8)])
def test_fused_zero_and_unit(I, W):
    rng = np.random.default_rng(I * 10 + W)
    w = rand_signed(rng, W, 64)
    assert fused_mac(np.zeros(64, int), w, I, W) == 0
    x = np.zeros(64, int)
    x[17] = 1
    assert fused_mac(x, w, I, W) == w[17]


@pytest.mark.parametrize("W", [2, 4, 6, 8])
@pytest.mark.parametrize("I", list(range(2, 13)))
def test_fused_random(I, W):
    rng = np.random.default_rng(I * 100 + W)
    x = rand_signed(rng, I, (500, 64))
    w = rand_signed(rng, W, (500, 64))
    want = [sum(int(a) * int(b) for a, b in zip(xr, wr)) for xr, wr in zip(x[:20], w[:20])]
    got = fused_mac(x, w, I, W)
    assert got[:20].tolist() == want
    assert np.array_equal(got, np.einsum("ij,ij->i", x, w))


def test_fused_exhaustive_tiny():
    vals = [-2, -1, 0, 1]
    combos = np.array(list(itertools.product(vals, repeat=4)))
    x = np.repeat(combos, len(combos), axis=0)
    w = np.tile(combos, (len(combos), 1))
    assert np.array_equal(fused_mac(x, w, 2, 2), (x * w).sum(axis=1))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.sampled_from([2, 4, 6, 8]), st.data())
def test_fused_property(I, W, data):
    n = data.draw(st.integers(1, 64))
    x = data.draw(st.lists(st.integers(-(1 << (I - 1)), (1 << (I - 1)) - 1), min_size=n, max_size=n))
    w = data.draw(st.lists(st.integers(-(1 << (W - 1)), (1 << (W - 1)) - 1), min_size=n, max_size=n))
    assert fused_mac(x, w, I, W) == sum(a * b for a, b in zip(x, w))


def test_fused_width_errors():
    with pytest.raises(ConfigError):
        fused_mac([4], [1], 3, 2)
    with pytest.raises(ConfigError):
        fused_mac([1], [1], 13, 2)
    with pytest.raises(ConfigError):
        fused_mac([1], [1], 4, 5)
    with pytest.raises(ShapeMismatchError):
        fused_mac([1, 1], [1], 4, 2)


# -- array geometry --------------------------------------------------------------------------

@pytest.mark.parametrize("W,channels", [(2, 96), (4, 48), (6, 32), (8, 24)])
def test_geometry(W, channels):
    cfg = ArrayConfig(weight_width=W)
    assert cfg.channels == channels
    assert cfg.channels * cfg.columns_per_channel == 96


@pytest.mark.parametrize("W", [2, 4, 6, 8])
def test_mac_array_matches_matmul(W):
    rng = np.random.default_rng(W)
    cfg = ArrayConfig(weight_width=W, input_width=9)
    arr = MacArray(cfg)
    wm = rand_signed(rng, W, (64, cfg.channels))
    arr.load_weights(wm)
    for _ in range(20):
        x = rand_signed(rng, 9, 64)
        assert np.array_equal(arr.compute(x), x @ wm)


def test_mac_array_partial_rows():
    cfg = ArrayConfig(weight_width=6, input_width=4)
    arr = MacArray(cfg)
    wm = np.arange(-20, 20).reshape(10, 4) % 31 - 15
    arr.load_weights(wm)
    x = np.arange(10) % 7 - 3
    out = arr.compute(x)
    assert np.array_equal(out[:4], x @ wm) and not out[4:].any()


# -- FP macro pipeline ---------------------------------------------------------------------------

def test_macro_lossless_equals_exact():
    # constant exponent per operand; b_g - 1 >= mant_bits keeps everything exact
    rng = np.random.default_rng(3)
    xc = (rng.integers(0, 2, 64) << 7) | (9 << 3) | rng.integers(0, 8, 64)
    wc = (rng.integers(0, 2, 64) << 7) | (2 << 5) | rng.integers(0, 32, 64)
    x, w = Fp8Tensor(xc.astype(np.uint8), E4M3), Fp8Tensor(wc.astype(np.uint8), E2M5)
    got = fp_macro_mac(x, w, DsbpConfig(0, 4, "input"), DsbpConfig(0, 7, "weight"), "fixed")
    assert Fraction(got) == exact_dot(x, w)


def test_macro_dynamic_lossless_when_bits_suffice():
    rng = np.random.default_rng(4)
    xc = (rng.integers(0, 2, 64) << 7) | (rng.integers(8, 10, 64) << 3) | rng.integers(0, 8, 64)
    x = Fp8Tensor(xc.astype(np.uint8), E4M3)
    w = Fp8Tensor(np.full(64, 0x20, dtype=np.uint8), E2M5)
    job = run_mac_job(x, w, DsbpConfig(2, 5, "input"), DsbpConfig(0, 7, "weight"), "dynamic")
    assert job.input_alignment.b_g - 1 >= 3 + 1
    assert Fraction(job.value) == exact_dot(x, w)


def test_macro_12_8_close_to_exact():
    rng = np.random.default_rng(5)
    errs = []
    for _ in range(50):
        x, w = finite_tensor(rng, E4M3, 64), finite_tensor(rng, E2M5, 64)
        ex = float(exact_dot(x, w))
        got = fp_macro_mac(x, w, DsbpConfig(0, 11, "input"), DsbpConfig(0, 7, "weight"), "fixed")
        low = fp_macro_mac(x, w, DsbpConfig(0, 3, "input"), DsbpConfig(0, 3, "weight"), "fixed")
        errs.append((abs(got - ex), abs(low - ex)))
    hi_err = sum(e[0] for e in errs)
    lo_err = sum(e[1] for e in errs)
    assert hi_err < lo_err / 16


def test_macro_e5m3_fixed_widths():
    rng = np.random.default_rng(6)
    x, w = finite_tensor(rng, E5M2, 64), finite_tensor(rng, E2M5, 64)
    job = run_mac_job(x, w, DsbpConfig(0, 3, "input"), DsbpConfig(0, 3, "weight"), "fixed")
    assert (job.input_width, job.weight_width) == (4, 4)
    assert job.mpu_trace is None


def test_macro_error_bound_monotone():
    # the signed dot-product error can cancel, but per-operand errors and the
    # worst-case bound shrink as both widths grow
    rng = np.random.default_rng(7)
    widths = [(1, 1), (3, 3), (5, 5), (7, 7)]
    for _ in range(100):
        x, w = finite_tensor(rng, E4M3, 64), finite_tensor(rng, E2M5, 64)
        xr, wr = x.to_real(), w.to_real()
        prev = None
        for bi, bw in widths:
            job = run_mac_job(x, w, DsbpConfig(0, bi, "input"), DsbpConfig(0, bw, "weight"), "fixed")
            xa, wa = job.input_alignment, job.weight_alignment
            ex = np.abs(np.ldexp(xa.aligned.astype(float), xa.scale_exp) - xr)
            ew = np.abs(np.ldexp(wa.aligned.astype(float), wa.scale_exp) - wr)
            bound = float(np.sum(ex * np.abs(wr) + np.abs(xr) * ew + ex * ew))
            cur = (ex, ew, bound)
            if prev is not None:
                assert np.all(cur[0] <= prev[0]) and np.all(cur[1] <= prev[1]) and cur[2] <= prev[2]
            prev = cur


def test_macro_sqnr_monotone_aggregate():
    rng = np.random.default_rng(8)
    x = finite_tensor(rng, E4M3, 16 * 128).reshape(16, 128)
    w = finite_tensor(rng, E2M5, 8 * 128).reshape(8, 128)
    exact = x.to_real() @ w.to_real().T
    prev = -np.inf
    for b in (1, 3, 5, 7):
        res = macro_matmul(x, w, DsbpConfig(0, b, "input"), DsbpConfig(0, b, "weight"), "fixed")
        q = sqnr(exact, res.output)
        assert q >= prev
        prev = q


def test_macro_matmul_matches_per_group_jobs():
    rng = np.random.default_rng(9)
    x = finite_tensor(rng, E5M2, 3 * 100).reshape(3, 100)
    w = finite_tensor(rng, E2M5, 2 * 100).reshape(2, 100)
    icfg, wcfg = DsbpConfig(1, 4, "input"), DsbpConfig(1, 3, "weight")
    res = macro_matmul(x, w, icfg, wcfg, "dynamic")
    xg, wg = partition(x, 64), partition(w, 64)
    for b in range(3):
        for c in range(2):
            want = sum(fp_macro_mac(xg[2 * b + g], wg[2 * c + g], icfg, wcfg, "dynamic") for g in range(2))
            assert res.output[b, c] == want
    assert res.input_bits.shape == (3, 2) and res.weight_bits.shape == (2, 2)
    assert res.avg_input_width == res.input_bits.mean() + 1


def test_macro_errors():
    x = Fp8Tensor(np.zeros(64, dtype=np.uint8), E4M3)
    w = Fp8Tensor(np.zeros(32, dtype=np.uint8), E2M5)
    with pytest.raises(ShapeMismatchError):
        fp_macro_mac(x, w, DsbpConfig(0, 3, "input"), DsbpConfig(0, 3), "fixed")
    with pytest.raises(ConfigError):
        fp_macro_mac(x, x, DsbpConfig(0, 3, "input"), DsbpConfig(0, 3), "turbo")
