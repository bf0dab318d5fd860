"""Two's-complement fixed-point words and the chip's bit-growth/truncation rules.

A :class:`QWord` holds a raw integer code interpreted as ``raw * 2**-frac_bits``.
Products of two words carry ``2 * frac_bits`` fractional bits and are kept in a
:class:`WideWord` until they are truncated back to the word format: the low
``frac_bits`` bits are dropped (floor) and the result is reduced to
``total_bits`` by wrapping or saturating.

Scalar helpers operate on Python integers and are exact for any width. The
``*_array`` variants work on numpy arrays of raw codes; they use ``int64`` when
the intermediate width provably fits and fall back to ``object`` arrays of
Python integers otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

WRAP = "wrap"
SATURATE = "saturate"


@dataclass(frozen=True)
class QFormat:
    total_bits: int = 12
    frac_bits: int = 9
    overflow_mode: str = WRAP

    def __post_init__(self):
        if not 1 <= self.frac_bits < self.total_bits <= 32:
            raise ValueError(
                f"need 1 <= frac_bits < total_bits <= 32, got Q{self.total_bits}.{self.frac_bits}"
            )
        if self.overflow_mode not in (WRAP, SATURATE):
            raise ValueError(f"unknown overflow_mode {self.overflow_mode!r}")

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits

    def with_mode(self, overflow_mode: str) -> "QFormat":
        return QFormat(self.total_bits, self.frac_bits, overflow_mode)

    def __str__(self):
        return f"Q{self.total_bits}.{self.frac_bits}({self.overflow_mode})"


Q12_9 = QFormat()


@dataclass(frozen=True)
class QWord:
    raw: int
    fmt: QFormat = Q12_9

    def __post_init__(self):
        if not self.fmt.min_raw <= self.raw <= self.fmt.max_raw:
            raise ValueError(f"raw code {self.raw} does not fit {self.fmt}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.fmt.frac_bits)

    def __float__(self):
        return dequantize(self)


@dataclass(frozen=True)
class WideWord:
    """Full-precision sum of word products, ``2 * fmt.frac_bits`` fractional bits."""

    raw: int
    fmt: QFormat = Q12_9

    @property
    def frac_bits(self) -> int:
        return 2 * self.fmt.frac_bits

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.frac_bits)


def wide_bits(fmt: QFormat, taps: int) -> int:
    """Bits needed to hold any sum of ``taps`` word products without loss."""
    return 2 * fmt.total_bits + max(0, math.ceil(math.log2(taps))) if taps > 0 else 2 * fmt.total_bits


def reduce_width(raw: int, fmt: QFormat) -> int:
    """Reduce an integer code to ``fmt.total_bits`` per the overflow mode."""
    if fmt.overflow_mode == SATURATE:
        return min(max(raw, fmt.min_raw), fmt.max_raw)
    half = 1 << (fmt.total_bits - 1)
    return ((raw + half) & ((1 << fmt.total_bits) - 1)) - half


def quantize(x: float, fmt: QFormat = Q12_9) -> QWord:
    """Floor ``x`` onto the fixed-point grid; out-of-range values follow the overflow mode."""
    scaled = Fraction(x) * (1 << fmt.frac_bits)
    return QWord(reduce_width(math.floor(scaled), fmt), fmt)


def dequantize(q: QWord) -> float:
    return q.raw * 2.0 ** -q.fmt.frac_bits


def inner_product_full(window: Sequence[QWord], kernel: Sequence[QWord]) -> WideWord:
    """Exact sum of products, as produced by the multipliers and adder tree."""
    if len(window) != len(kernel):
        raise ValueError(f"operand lengths differ: {len(window)} vs {len(kernel)}")
    fmts = {q.fmt for q in window} | {q.fmt for q in kernel}
    if len(fmts) > 1:
        raise ValueError(f"operands mix formats: {sorted(map(str, fmts))}")
    fmt = fmts.pop() if fmts else Q12_9
    return WideWord(sum(w.raw * k.raw for w, k in zip(window, kernel)), fmt)


def truncate(w: WideWord, fmt: QFormat | None = None) -> QWord:
    """Drop the extra fractional bits (floor) and reduce to the word width."""
    fmt = fmt or w.fmt
    return QWord(reduce_width(w.raw >> fmt.frac_bits, fmt), fmt)


# --- array forms (raw integer codes) ---

def exact_dtype(fmt: QFormat, taps: int, terms: int = 1):
    """``int64`` if ``terms`` sums of ``taps`` products always fit, else ``object``."""
    need = wide_bits(fmt, taps) + (math.ceil(math.log2(terms)) if terms > 1 else 0)
    return np.int64 if need <= 62 else object


def as_exact(raw, dtype) -> np.ndarray:
    a = np.asarray(raw)
    if dtype is object:
        return np.array([int(v) for v in a.ravel()], dtype=object).reshape(a.shape)
    return a.astype(np.int64)


def quantize_array(x, fmt: QFormat = Q12_9) -> np.ndarray:
    """Vectorized :func:`quantize`; returns int64 raw codes."""
    scaled = np.floor(np.ldexp(np.asarray(x, dtype=np.float64), fmt.frac_bits))
    if np.all(np.abs(scaled) < 2.0 ** 62):
        raw = scaled.astype(np.int64)
    else:
        raw = np.array([int(v) for v in scaled.ravel()], dtype=object).reshape(scaled.shape)
    return reduce_width_array(raw, fmt).astype(np.int64)


def dequantize_array(raw, fmt: QFormat = Q12_9) -> np.ndarray:
    return np.ldexp(np.asarray(raw).astype(np.float64), -fmt.frac_bits)


def reduce_width_array(raw, fmt: QFormat) -> np.ndarray:
    raw = np.asarray(raw)
    if fmt.overflow_mode == SATURATE:
        return np.minimum(np.maximum(raw, fmt.min_raw), fmt.max_raw)
    half = 1 << (fmt.total_bits - 1)
    return ((raw + half) & ((1 << fmt.total_bits) - 1)) - half


def truncate_array(wide, fmt: QFormat) -> np.ndarray:
    """Vectorized :func:`truncate` on raw WideWord codes; returns int64 codes."""
    return reduce_width_array(np.asarray(wide) >> fmt.frac_bits, fmt).astype(np.int64)


def fits(raw, fmt: QFormat) -> bool:
    raw = np.asarray(raw)
    return bool(np.all((raw >= fmt.min_raw) & (raw <= fmt.max_raw)))
