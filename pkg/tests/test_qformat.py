from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from origami.qformat import (
    Q12_9,
    SATURATE,
    QFormat,
    QWord,
    WideWord,
    dequantize,
    exact_dtype,
    fits,
    inner_product_full,
    quantize,
    quantize_array,
    reduce_width,
    reduce_width_array,
    truncate,
    truncate_array,
    wide_bits,
)

formats = st.builds(
    lambda t, f, m: QFormat(t, min(f, t - 1), m),
    st.integers(2, 32),
    st.integers(1, 31),
    st.sampled_from(["wrap", "saturate"]),
)


def ref_reduce(v, fmt):
    # two's-complement interpretation of the low bits, or a clamp
    if fmt.overflow_mode == SATURATE:
        return min(max(v, fmt.min_raw), fmt.max_raw)
    m = v % (1 << fmt.total_bits)
    return m - (1 << fmt.total_bits) if m >= 1 << (fmt.total_bits - 1) else m


def test_defaults():
    assert (Q12_9.total_bits, Q12_9.frac_bits, Q12_9.overflow_mode) == (12, 9, "wrap")
    assert (Q12_9.min_raw, Q12_9.max_raw) == (-2048, 2047)
    assert Q12_9.lsb == 2 ** -9


@pytest.mark.parametrize("t,f", [(12, 12), (12, 0), (33, 9), (4, 5)])
def test_bad_format(t, f):
    with pytest.raises(ValueError):
        QFormat(t, f)


def test_bad_mode():
    with pytest.raises(ValueError):
        QFormat(12, 9, "round")


def test_qword_range():
    QWord(2047)
    with pytest.raises(ValueError):
        QWord(2048)
    with pytest.raises(ValueError):
        QWord(-2049)


@given(st.integers(-(1 << 40), 1 << 40), formats)
def test_reduce_width_matches_reference(v, fmt):
    assert reduce_width(v, fmt) == ref_reduce(v, fmt)


@given(st.integers(-2048, 2047))
def test_round_trip_exact(raw):
    q = QWord(raw)
    assert quantize(dequantize(q)) == q
    assert q.value == Fraction(raw, 512)


@given(st.floats(-4, 4 - 2 ** -9, allow_nan=False))
def test_quantize_floors(x):
    q = quantize(x)
    assert q.value <= Fraction(x) < q.value + Fraction(1, 512)


def test_quantize_wraps_and_saturates():
    assert quantize(4.0).raw == -2048
    assert quantize(4.0, Q12_9.with_mode(SATURATE)).raw == 2047
    assert quantize(-5.0, Q12_9.with_mode(SATURATE)).raw == -2048


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(-2048, 2047), st.integers(-2048, 2047)), min_size=1, max_size=60))
def test_inner_product_and_truncate(pairs):
    a = [QWord(p) for p, _ in pairs]
    b = [QWord(q) for _, q in pairs]
    w = inner_product_full(a, b)
    exact = sum(x.value * y.value for x, y in zip(a, b))
    assert w.value == exact
    t = truncate(w)
    # floor to the word grid, then wrap
    assert t.raw == ref_reduce(math.floor(exact * 512), Q12_9)


def test_inner_product_rejects_mismatch():
    with pytest.raises(ValueError):
        inner_product_full([QWord(1)], [QWord(1), QWord(2)])
    with pytest.raises(ValueError):
        inner_product_full([QWord(1)], [QWord(1, QFormat(16, 8))])


def test_truncate_negative_is_floor():
    # -1 LSB of the wide format floors to -1 LSB of the word
    assert truncate(WideWord(-1)).raw == -1
    assert truncate(WideWord(511)).raw == 0
    assert truncate(WideWord(512)).raw == 1


def test_wide_bits():
    assert wide_bits(Q12_9, 49) == 30
    assert wide_bits(Q12_9, 1) == 24
    assert exact_dtype(Q12_9, 49, 8) is np.int64
    assert exact_dtype(QFormat(32, 16), 49, 8) is object


@given(st.lists(st.integers(-(1 << 30), 1 << 30), min_size=1, max_size=20), formats)
def test_array_forms_match_scalar(vals, fmt):
    a = np.array(vals, dtype=np.int64)
    assert reduce_width_array(a, fmt).tolist() == [reduce_width(v, fmt) for v in vals]
    assert truncate_array(a, fmt).tolist() == [truncate(WideWord(v, fmt)).raw for v in vals]


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20))
def test_quantize_array_matches_scalar(xs):
    assert quantize_array(np.array(xs)).tolist() == [quantize(x).raw for x in xs]


def test_quantize_array_huge_values():
    fmt = QFormat(32, 30, SATURATE)
    assert quantize_array(np.array([1e30, -1e30]), fmt).tolist() == [fmt.max_raw, fmt.min_raw]


def test_fits():
    assert fits(np.array([-2048, 2047]), Q12_9)
    assert not fits(np.array([2048]), Q12_9)
