#!/usr/bin/env python3
"""
Instrumented floating point: one operation at a stated precision, returning
the rounded result together with its rounding error and fault statistics.

For ``c = a op b`` the observed rounding error is ``eps = c - exact``.  How
``exact`` is obtained depends on the operation:

* f32 add/sub, f64 add/sub: TwoSum at the operation's width (exact).
* f32 mul: the product in f64 (24+24 significand bits fit in 53, exact).
* f32 div and intrinsics: the f64 evaluation on the f32 inputs.
* f64 mul/div/intrinsics: mpmath at 128 bits.

Exponent arithmetic reads exponent fields only; zeros and subnormals use the
minimum normal exponent of the format.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import mpmath
import numpy as np

from common_config import AmpError, F32_MANTISSA, F64_MANTISSA
from nir import F32, F64

DTYPES = {F32: np.float32, F64: np.float64}
EMIN = {F32: -126, F64: -1022}
EMAX = {F32: 127, F64: 1023}

EXACT = None
ERRRATIO_MIN = -64
ERRRATIO_MAX = 64

BINARY_OPS = ("add", "sub", "mul", "div")
UNARY_OPS = ("sin", "exp", "sqrt", "fabs")
KERNEL_OPS = BINARY_OPS + UNARY_OPS

_MP_BITS = 128

Scalar = Union[float, np.floating]


@dataclass(frozen=True)
class KernelConfig:
    """Mantissa lengths used in the error-ratio formula."""

    f32_mantissa: int = F32_MANTISSA
    f64_mantissa: int = F64_MANTISSA

    def __post_init__(self):
        if self.f32_mantissa <= 0 or self.f64_mantissa <= 0:
            raise AmpError("mantissa length must be positive")

    def mantissa(self, prec: str) -> int:
        return self.f64_mantissa if prec == F64 else self.f32_mantissa


DEFAULT_KERNEL = KernelConfig()


@dataclass(frozen=True)
class FpOutcome:
    result: np.floating
    eps: float
    eps_exponent: Optional[int]
    errratio_log: Optional[int]
    addend_expdiff: Optional[int]  # add/sub only
    cancelled_bits: Optional[int]  # add/sub only
    abs_result: float
    range_fault: bool = False

    @property
    def exact(self) -> bool:
        return self.errratio_log is EXACT


def exponent_of(x: Scalar, prec: str) -> int:
    """Unbiased exponent of ``x`` as the ``prec`` exponent field reads it."""
    value = float(x)
    if not math.isfinite(value):
        return EMAX[prec] + 1
    if value == 0.0:
        return EMIN[prec]
    return max(math.frexp(value)[1] - 1, EMIN[prec])


def errratio_log(eps_exp: Optional[int], c_exp: int, p: int) -> Optional[int]:
    """log2 of |eps| relative to the largest error of an ulp at exp(c)."""
    if eps_exp is EXACT:
        return EXACT
    return min(max(eps_exp + p - c_exp, ERRRATIO_MIN), ERRRATIO_MAX)


def apply_op(
    op: str, a: Scalar, b: Optional[Scalar], prec: str
) -> np.floating:
    """The rounded result only; every execution path computes c here."""
    dtype = DTYPES[prec]
    x = dtype(a)
    with np.errstate(all="ignore"):
        if op == "add":
            return x + dtype(b)
        if op == "sub":
            return x - dtype(b)
        if op == "mul":
            return x * dtype(b)
        if op == "div":
            return x / dtype(b)
        if op == "fabs":
            return np.abs(x)
        if op == "sqrt":
            return np.sqrt(x)
        if op in ("sin", "exp"):
            fn = np.sin if op == "sin" else np.exp
            if prec == F32:
                return np.float32(fn(np.float64(x)))
            return fn(x)
    raise AmpError(f"unknown kernel operation {op!r}")


def _two_sum(a: np.floating, b: np.floating):
    """(s, err) with s + err == a + b exactly, at the width of a and b."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _mp_exact(op: str, a: Scalar, b: Optional[Scalar]) -> mpmath.mpf:
    x = mpmath.mpf(float(a))
    if op == "mul":
        return x * mpmath.mpf(float(b))
    if op == "div":
        return x / mpmath.mpf(float(b))
    if op == "sin":
        return mpmath.sin(x)
    if op == "exp":
        return mpmath.exp(x)
    if op == "sqrt":
        return mpmath.sqrt(x)
    return abs(x)


def _rounding_error(op: str, a, b, c, prec: str):
    """Return (eps as float, exponent of eps or EXACT)."""
    dtype = DTYPES[prec]
    if op == "fabs":
        return 0.0, EXACT
    if op in ("add", "sub"):
        y = dtype(b) if op == "add" else -dtype(b)
        with np.errstate(all="ignore"):
            _, err = _two_sum(dtype(a), y)
        eps = -float(err)
    elif prec == F32:
        x = np.float64(dtype(a))
        if op == "mul":
            exact = x * np.float64(dtype(b))
        elif op == "div":
            exact = x / np.float64(dtype(b))
        else:
            exact = np.float64(apply_op(op, x, None, F64))
        eps = float(np.float64(c) - exact)
    else:
        with mpmath.workprec(_MP_BITS):
            delta = mpmath.mpf(float(c)) - _mp_exact(op, a, b)
            if delta == 0:
                return 0.0, EXACT
            return float(delta), int(mpmath.frexp(delta)[1]) - 1
    if eps == 0.0:
        return 0.0, EXACT
    return eps, math.frexp(eps)[1] - 1


def _is_effective_subtraction(op: str, a, b) -> bool:
    fa, fb = float(a), float(b)
    if fa == 0.0 or fb == 0.0:
        return False
    same_sign = (fa > 0) == (fb > 0)
    return same_sign if op == "sub" else not same_sign


def exec_fp(
    op: str,
    a: Scalar,
    b: Optional[Scalar],
    prec: str,
    config: KernelConfig = DEFAULT_KERNEL,
) -> FpOutcome:
    """Execute ``op`` at ``prec`` and measure what it did to the value."""
    if op not in KERNEL_OPS:
        raise AmpError(f"unknown kernel operation {op!r}")
    c = apply_op(op, a, b, prec)
    abs_c = abs(float(c))
    additive = op in ("add", "sub")

    operands = (a,) if b is None else (a, b)
    if not all(math.isfinite(float(v)) for v in operands + (c,)):
        return FpOutcome(
            result=c,
            eps=math.nan,
            eps_exponent=EMAX[prec] + 1,
            errratio_log=ERRRATIO_MAX,
            addend_expdiff=0 if additive else None,
            cancelled_bits=0 if additive else None,
            abs_result=abs_c,
            range_fault=True,
        )

    eps, eps_exp = _rounding_error(op, a, b, c, prec)
    c_exp = exponent_of(c, prec)
    if eps_exp is EXACT:
        ratio = EXACT
    elif float(c) == 0.0:
        ratio = ERRRATIO_MAX
    else:
        ratio = errratio_log(eps_exp, c_exp, config.mantissa(prec))

    expdiff = cancelled = None
    if additive:
        exp_a, exp_b = exponent_of(a, prec), exponent_of(b, prec)
        # A zero addend absorbs nothing.
        if float(a) == 0.0 or float(b) == 0.0:
            expdiff = 0
        else:
            expdiff = abs(exp_a - exp_b)
        cancelled = 0
        if _is_effective_subtraction(op, a, b) and float(c) != 0.0:
            cancelled = max(max(exp_a, exp_b) - c_exp, 0)

    return FpOutcome(
        result=c,
        eps=eps,
        eps_exponent=eps_exp,
        errratio_log=ratio,
        addend_expdiff=expdiff,
        cancelled_bits=cancelled,
        abs_result=abs_c,
    )
