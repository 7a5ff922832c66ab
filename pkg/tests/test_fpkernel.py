import math
import struct
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from common_config import AmpError
from fpkernel import (
    ERRRATIO_MAX,
    ERRRATIO_MIN,
    KernelConfig,
    _two_sum,
    errratio_log,
    exec_fp,
    exponent_of,
)
from nir import F32, F64


def test_exact_add():
    out = exec_fp("add", 1.0, 2.0, F32)
    assert out.result == np.float32(3.0)
    assert out.exact
    assert out.eps == 0.0
    assert out.addend_expdiff == 1
    assert out.cancelled_bits == 0


def test_inexact_add_ratio():
    # 1 + 2^-24 is a tie and rounds to even, losing half an ulp.
    out = exec_fp("add", 1.0, 2.0**-24, F32)
    assert out.result == np.float32(1.0)
    assert out.eps == -(2.0**-24)
    assert out.eps_exponent == -24
    assert out.errratio_log == -1
    assert out.addend_expdiff == 24


def test_cancellation_bits():
    out = exec_fp("sub", 1.0 + 2.0**-23, 1.0, F32)
    assert out.exact
    assert out.result == np.float32(2.0**-23)
    assert out.cancelled_bits == 23


def test_same_sign_add_does_not_cancel():
    out = exec_fp("add", -1.0 - 2.0**-23, 1.0, F32)
    assert out.cancelled_bits == 23
    out = exec_fp("add", 1.0 + 2.0**-23, 1.0, F32)
    assert out.cancelled_bits == 0


def test_zero_addend_has_no_gap():
    out = exec_fp("add", 0.0, 5.0e30, F32)
    assert out.addend_expdiff == 0
    assert out.cancelled_bits == 0


@pytest.mark.parametrize("prec", [F32, F64])
@pytest.mark.parametrize(
    "op, a, b",
    [
        ("add", 0.1, 0.7),
        ("sub", 3.3, 1.1),
        ("mul", 0.1, 0.3),
        ("div", 1.0, 3.0),
        ("sin", 0.5, None),
        ("exp", 1.5, None),
        ("sqrt", 2.0, None),
    ],
)
def test_error_at_most_half_ulp(op, a, b, prec):
    out = exec_fp(op, a, b, prec)
    assert not out.range_fault
    if not out.exact:
        assert ERRRATIO_MIN <= out.errratio_log <= -1


def test_f64_mul_error_matches_mpmath():
    out = exec_fp("mul", 0.1, 0.1, F64)
    with mpmath.workprec(200):
        exact = mpmath.mpf(0.1) * mpmath.mpf(0.1)
        expected = float(mpmath.mpf(float(out.result)) - exact)
    assert out.eps == pytest.approx(expected, rel=1e-12)
    assert out.eps_exponent == math.frexp(expected)[1] - 1


def test_f32_intrinsic_rounds_double_result():
    x = np.float32(0.7)
    out = exec_fp("sin", x, None, F32)
    assert out.result == np.float32(np.sin(np.float64(x)))
    assert out.addend_expdiff is None
    assert out.cancelled_bits is None


def test_fabs_is_exact():
    out = exec_fp("fabs", -2.5, None, F32)
    assert out.result == np.float32(2.5)
    assert out.exact


@pytest.mark.parametrize(
    "op, a, b",
    [("mul", 3.0e38, 10.0), ("div", 1.0, 0.0), ("sqrt", -1.0, None)],
)
def test_range_faults(op, a, b):
    out = exec_fp(op, a, b, F32)
    assert out.range_fault
    assert out.errratio_log == ERRRATIO_MAX
    assert out.eps_exponent == 128


def test_underflow_to_zero_is_worst_ratio():
    out = exec_fp("mul", 1e-30, 1e-30, F32)
    assert out.result == 0.0
    assert not out.range_fault
    assert out.errratio_log == ERRRATIO_MAX


def test_mantissa_length_shifts_ratio():
    default = exec_fp("add", 1.0, 2.0**-24, F32)
    short = exec_fp("add", 1.0, 2.0**-24, F32, KernelConfig(f32_mantissa=10))
    assert short.errratio_log == default.errratio_log - 13
    with pytest.raises(AmpError):
        KernelConfig(f32_mantissa=0)


def test_errratio_log_clamps():
    assert errratio_log(None, 0, 23) is None
    assert errratio_log(-200, 0, 23) == ERRRATIO_MIN
    assert errratio_log(200, 0, 23) == ERRRATIO_MAX
    assert errratio_log(-24, 0, 23) == -1


@pytest.mark.parametrize(
    "x, prec, expected",
    [
        (1.0, F32, 0),
        (0.75, F32, -1),
        (0.0, F32, -126),
        (1e-45, F32, -126),
        (math.inf, F32, 128),
        (0.0, F64, -1022),
        (2.0**600, F64, 600),
    ],
)
def test_exponent_of(x, prec, expected):
    assert exponent_of(x, prec) == expected


@pytest.mark.parametrize("a, b", [(1.0, 1e-20), (0.1, 0.2), (1e16, -1.0)])
def test_two_sum_is_error_free(a, b):
    s, err = _two_sum(np.float64(a), np.float64(b))
    with mpmath.workprec(300):
        assert mpmath.mpf(float(s)) + mpmath.mpf(float(err)) == mpmath.mpf(
            a
        ) + mpmath.mpf(b)


def test_unknown_operation():
    with pytest.raises(AmpError, match="unknown kernel operation"):
        exec_fp("pow", 1.0, 2.0, F32)


def test_small_addend_is_absorbed():
    out = exec_fp("add", 1.0, 2.0**-30, F32)
    assert out.result == np.float32(1.0)
    assert out.eps == -(2.0**-30)
    assert out.eps_exponent == -30
    assert out.errratio_log == -30 + 23
    assert out.addend_expdiff == 30


def test_subtracting_nearest_float_below_one():
    b = np.float32(0.9999999)
    assert float(b) == 1.0 - 2.0**-23
    out = exec_fp("sub", 1.0, b, F32)
    assert out.exact
    assert out.result == np.float32(2.0**-23)
    assert out.cancelled_bits == 23
    assert out.addend_expdiff == 1


# --- Exact oracles over random f32 operands ---
def field_exponent(x) -> int:
    """Exponent read straight from the binary32 bit pattern."""
    bits = struct.unpack("<I", struct.pack("<f", float(x)))[0]
    return max(((bits >> 23) & 0xFF) - 127, -126)


def random_f32_pairs(seed: int, count: int) -> np.ndarray:
    """Finite f32 pairs from raw bit patterns, half with close exponents."""
    rng = np.random.default_rng(seed)
    sign = rng.integers(0, 2, size=(count, 2), dtype=np.uint32) << 31
    mant = rng.integers(0, 1 << 23, size=(count, 2), dtype=np.uint32)
    exp_a = rng.integers(0, 255, size=count)
    near = np.clip(exp_a + rng.integers(-3, 4, size=count), 0, 254)
    exp_b = np.where(
        np.arange(count) % 2 == 0, near, rng.integers(0, 255, size=count)
    )
    exps = np.stack([exp_a, exp_b], axis=1).astype(np.uint32) << 23
    return (sign | exps | mant).view(np.float32)


EXACT_OPS = {
    "add": lambda x, y: x + y,
    "sub": lambda x, y: x - y,
    "mul": lambda x, y: x * y,
}


def check_against_fractions(pairs: np.ndarray):
    for a, b in pairs:
        for op, exact_op in EXACT_OPS.items():
            out = exec_fp(op, a, b, F32)
            if not np.isfinite(out.result):
                assert out.range_fault
                continue
            c = float(out.result)
            exact = exact_op(Fraction(float(a)), Fraction(float(b)))
            eps = Fraction(c) - exact
            assert Fraction(out.eps) == eps, (op, a, b)

            if eps == 0:
                assert out.errratio_log is None
            elif c == 0.0:
                assert out.errratio_log == ERRRATIO_MAX
            else:
                eps_exp = math.frexp(float(eps))[1] - 1
                ratio = eps_exp + 23 - field_exponent(c)
                expected = min(max(ratio, ERRRATIO_MIN), ERRRATIO_MAX)
                assert out.errratio_log == expected, (op, a, b)

            if op == "mul":
                continue
            if a == 0 or b == 0:
                assert out.addend_expdiff == 0
            else:
                diff = field_exponent(a) - field_exponent(b)
                assert out.addend_expdiff == abs(diff)
            opposite = (a > 0) != (b > 0)
            subtracts = opposite if op == "add" else not opposite
            if a != 0 and b != 0 and subtracts and c != 0.0:
                top = max(field_exponent(a), field_exponent(b))
                lost = max(top - field_exponent(c), 0)
                assert out.cancelled_bits == lost, (op, a, b)
            else:
                assert out.cancelled_bits == 0


def test_random_pairs_match_fraction_oracle():
    check_against_fractions(random_f32_pairs(seed=7, count=5000))


@pytest.mark.slow
def test_many_random_pairs_match_fraction_oracle():
    check_against_fractions(random_f32_pairs(seed=11, count=200_000))


def sterbenz_pairs(seed: int, count: int):
    """Positive f32 pairs with b/2 <= a <= 2b, exponents in [-50, 50]."""
    rng = np.random.default_rng(seed)
    b = np.ldexp(rng.uniform(1.0, 2.0, count), rng.integers(-50, 51, count))
    a = b * rng.uniform(0.5, 2.0, count)
    a, b = a.astype(np.float32), b.astype(np.float32)
    keep = (a.astype(np.float64) * 2 >= b) & (a <= b.astype(np.float64) * 2)
    return a[keep], b[keep]


def test_sterbenz_subtraction_is_exact():
    a, b = sterbenz_pairs(seed=3, count=20000)
    assert len(a) > 19000
    for x, y in zip(a, b):
        out = exec_fp("sub", x, y, F32)
        assert out.exact, (x, y)
        assert Fraction(float(out.result)) == Fraction(float(x)) - Fraction(
            float(y)
        )


@pytest.mark.parametrize("k", [-30, -7, 1, 12, 30])
def test_cancelled_bits_ignore_common_scaling(k):
    a, b = sterbenz_pairs(seed=5, count=2000)
    for x, y in zip(a, b):
        base = exec_fp("sub", x, y, F32)
        scaled = exec_fp("sub", np.ldexp(x, k), np.ldexp(y, k), F32)
        assert scaled.cancelled_bits == base.cancelled_bits, (x, y, k)
