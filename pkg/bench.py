#!/usr/bin/env python3
"""
Benchmark programs for AMP: in-place LU factorization and Gauss-Legendre
quadrature of sin(x)*exp(x), with their seeded inputs, host-side oracles and
accuracy metrics.

The programs are generated as NIR text so they can be written to disk and
fed back through every pipeline stage. Sizes are baked into the text, so
``lu_program(100)`` and ``lu_program(300)`` share all InstrIds and an ICS
learned on one applies to the other.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from common_config import AmpError, setup_logging
from interp import ExecInput, ExecOutput
from nir import Program, parse_text

logger = setup_logging("bench")

# --- Seeded Generator ---
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class BenchError(AmpError):
    pass


class SplitMix64:
    """64-bit splitmix sequence; the normative input generator."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float, count: int) -> np.ndarray:
        """``count`` samples of low + u*(high - low), rounded to f32."""
        values = [low + self.next_unit() * (high - low) for _ in range(count)]
        return np.asarray(values, dtype=np.float64).astype(np.float32)


# --- LU Factorization ---
@dataclass(frozen=True)
class MatrixInput:
    n: int
    seed: int = 42
    low: float = -1e6
    high: float = 1e6

    def __post_init__(self):
        if self.n < 2:
            raise BenchError(f"matrix dimension must be >= 2, got {self.n}")


_LU_TEMPLATE = """\
func @lu(%A: arr<f32,{size}>) -> void {{
entry:
  br k_head
k_head:
  %k = phi i64 [0, entry], [%k.next, k_latch]
  %k.ok = icmp lt %k, {n}
  brcond %k.ok, k_body, done
k_body:
  %kk = idx %k, %k, {n}
  %pivot = load f32 %A, %kk
  %i0 = iadd %k, 1
  br i_head
i_head:
  %i = phi i64 [%i0, k_body], [%i.next, i_latch]
  %i.ok = icmp lt %i, {n}
  brcond %i.ok, i_body, k_latch
i_body:
  %ik = idx %i, %k, {n}
  %aik = load f32 %A, %ik
  %l = fdiv f32 %aik, %pivot
  store f32 %A, %ik, %l
  %j0 = iadd %k, 1
  br j_head
j_head:
  %j = phi i64 [%j0, i_body], [%j.next, j_body]
  %j.ok = icmp lt %j, {n}
  brcond %j.ok, j_body, i_latch
j_body:
  %ij = idx %i, %j, {n}
  %kj = idx %k, %j, {n}
  %aij = load f32 %A, %ij
  %akj = load f32 %A, %kj
  %prod = fmul f32 %l, %akj
  %diff = fsub f32 %aij, %prod
  store f32 %A, %ij, %diff
  %j.next = iadd %j, 1
  br j_head
i_latch:
  %i.next = iadd %i, 1
  br i_head
k_latch:
  %k.next = iadd %k, 1
  br k_head
done:
  ret
}}
"""


def lu_text(n: int) -> str:
    if n < 2:
        raise BenchError(f"matrix dimension must be >= 2, got {n}")
    return _LU_TEMPLATE.format(n=n, size=n * n)


def lu_program(n: int) -> Program:
    """Doolittle LU without pivoting, in place, k/i/j loop order."""
    return parse_text(lu_text(n))


def gen_matrix(mi: MatrixInput) -> ExecInput:
    data = SplitMix64(mi.seed).uniform(mi.low, mi.high, mi.n * mi.n)
    return ExecInput(arrays={"A": data})


def reference_lu(a: Sequence[float], n: int, dtype=np.float32) -> np.ndarray:
    """Host LU with the program's elimination order, at ``dtype``."""
    m = np.array(a, dtype=np.float32).astype(dtype).reshape(n, n)
    with np.errstate(all="ignore"):
        for k in range(n):
            pivot = m[k, k]
            for i in range(k + 1, n):
                lik = m[i, k] / pivot
                m[i, k] = lik
                m[i, k + 1 :] = m[i, k + 1 :] - lik * m[k, k + 1 :]
    return m.ravel()


def split_lu(packed: Sequence[float], n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unpack an in-place factorization into unit-lower L and upper U."""
    m = np.asarray(packed, dtype=np.float64).reshape(n, n)
    lower = np.tril(m, -1) + np.eye(n)
    upper = np.triu(m)
    return lower, upper


# --- Gauss-Legendre Quadrature ---
QUAD_LOW = -10.0
QUAD_HIGH = 10.0
QUAD_ORDER = 20


def gauss_legendre_nodes(
    n: int,
    low: float = -1.0,
    high: float = 1.0,
    tol: float = 1e-14,
    max_iter: int = 100,
) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule on [low, high], ascending.

    Newton iteration on the three-term Legendre recurrence, all roots at
    once, starting from the Chebyshev-like guesses cos(pi*(i+0.75)/(n+0.5)).
    """
    if n < 2:
        raise BenchError(f"quadrature order must be >= 2, got {n}")
    m = (n + 1) // 2
    z = np.cos(np.pi * (np.arange(m) + 0.75) / (n + 0.5))

    def legendre(z: np.ndarray):
        p1, p2 = np.ones_like(z), np.zeros_like(z)
        for j in range(1, n + 1):
            p1, p2 = ((2 * j - 1) * z * p1 - (j - 1) * p2) / j, p1
        dp = n * (z * p1 - p2) / (z * z - 1.0)
        return p1, dp

    for _ in range(max_iter):
        p1, dp = legendre(z)
        step = p1 / dp
        z = z - step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise BenchError(f"Newton iteration did not converge for n={n}")

    _, dp = legendre(z)
    w = 2.0 / ((1.0 - z * z) * dp * dp)
    nodes = np.empty(n)
    weights = np.empty(n)
    nodes[:m], nodes[n - m :] = -z, z[::-1]
    weights[:m], weights[n - m :] = w, w[::-1]

    half = 0.5 * (high - low)
    return 0.5 * (high + low) + half * nodes, half * weights


_QUAD_TEMPLATE = """\
func @quad(%X: arr<f32,{n}>, %W: arr<f32,{n}>, %F: arr<f32,{n}>) -> f32 {{
entry:
  %zero = fconst f32 0.0
  br loop
loop:
  %i = phi i64 [0, entry], [%i.next, body]
  %acc = phi f32 [%zero, entry], [%sum, body]
  %i.ok = icmp lt %i, {n}
  brcond %i.ok, body, done
body:
  %x = load f32 %X, %i
  %w = load f32 %W, %i
  %s = fcall sin f32 %x
  %e = fcall exp f32 %x
  %p = fmul f32 %s, %e
  %t = fmul f32 %w, %p
  store f32 %F, %i, %t
  %sum = fadd f32 %acc, %t
  %i.next = iadd %i, 1
  br loop
done:
  ret %acc
}}
"""


def quad_text(n: int = QUAD_ORDER) -> str:
    if n < 2:
        raise BenchError(f"quadrature order must be >= 2, got {n}")
    return _QUAD_TEMPLATE.format(n=n)


def quad_program(n: int = QUAD_ORDER) -> Program:
    """Sum of w_i * sin(x_i) * exp(x_i), accumulated sequentially in f32.

    Each term is also stored into %F, the small storage array of the run.
    """
    return parse_text(quad_text(n))


def quad_input(
    n: int = QUAD_ORDER, low: float = QUAD_LOW, high: float = QUAD_HIGH
) -> ExecInput:
    nodes, weights = gauss_legendre_nodes(n, low, high)
    return ExecInput(
        arrays={
            "X": nodes.astype(np.float32),
            "W": weights.astype(np.float32),
            "F": np.zeros(n, dtype=np.float32),
        }
    )


def quad_exact(low: float = QUAD_LOW, high: float = QUAD_HIGH) -> float:
    """Analytic value from the antiderivative e^x (sin x - cos x) / 2."""

    def antiderivative(x: float) -> float:
        return math.exp(x) * (math.sin(x) - math.cos(x)) / 2.0

    return antiderivative(high) - antiderivative(low)


def reference_quad(
    nodes: Sequence[float], weights: Sequence[float], dtype=np.float64
) -> np.floating:
    """Host evaluation in the program's order; inputs rounded to f32 first."""
    x = np.asarray(nodes, dtype=np.float32).astype(dtype)
    w = np.asarray(weights, dtype=np.float32).astype(dtype)
    acc = dtype(0.0)
    for xi, wi in zip(x, w):
        if dtype is np.float32:
            s = np.float32(np.sin(np.float64(xi)))
            e = np.float32(np.exp(np.float64(xi)))
        else:
            s, e = np.sin(xi), np.exp(xi)
        acc = acc + wi * (s * e)
    return acc


# --- Accuracy Metrics ---
class MetricKind(str, Enum):
    FROBENIUS = "frobenius"
    ABS_ERROR = "abs"


@dataclass(frozen=True)
class AccuracyMetric:
    """Distance of a run's outputs from the double-precision baseline.

    FROBENIUS compares the named output arrays (all of them by default);
    ABS_ERROR compares the returned scalar.
    """

    kind: MetricKind = MetricKind.FROBENIUS
    arrays: Optional[Tuple[str, ...]] = None

    @classmethod
    def parse(cls, text: str) -> "AccuracyMetric":
        try:
            return cls(MetricKind(text))
        except ValueError:
            raise BenchError(f"unknown accuracy metric {text!r}") from None


def accuracy(
    out: ExecOutput, baseline: ExecOutput, metric: AccuracyMetric
) -> float:
    if metric.kind is MetricKind.ABS_ERROR:
        if out.ret is None or baseline.ret is None:
            raise BenchError("abs metric needs a returned value")
        return abs(float(out.ret) - float(baseline.ret))

    names = metric.arrays or tuple(sorted(baseline.arrays))
    total = 0.0
    for name in names:
        if name not in out.arrays or name not in baseline.arrays:
            raise BenchError(f"output array %{name} missing")
        a = np.asarray(out.arrays[name], dtype=np.float64)
        b = np.asarray(baseline.arrays[name], dtype=np.float64)
        if a.shape != b.shape:
            raise BenchError(
                f"shape mismatch on %{name}: {a.shape} vs {b.shape}"
            )
        total += float(np.sum((a - b) ** 2))
    return math.sqrt(total)


# --- Registry ---
@dataclass(frozen=True)
class BenchCase:
    name: str
    program: Program
    train: ExecInput
    metric: AccuracyMetric


def bench_case(
    name: str, size: Optional[int] = None, seed: int = 42
) -> BenchCase:
    """Named benchmark at a size (matrix dimension or quadrature order)."""
    if name == "lu":
        n = size or 8
        return BenchCase(
            name,
            lu_program(n),
            gen_matrix(MatrixInput(n, seed)),
            AccuracyMetric(MetricKind.FROBENIUS),
        )
    if name == "quad":
        n = size or QUAD_ORDER
        return BenchCase(
            name,
            quad_program(n),
            quad_input(n),
            AccuracyMetric(MetricKind.ABS_ERROR),
        )
    raise BenchError(f"unknown benchmark {name!r} (expected lu or quad)")
