"""Exact-interval (Enclosure) arithmetic and the precision-escalation ladder."""

from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from normalis.errors import PrecisionCapError
from normalis.precision import (
    Enclosure,
    escalate,
    iv_from_enclosure,
    iv_from_fraction,
    iv_to_enclosure,
    ivctx,
    mpf_tuple_to_fraction,
    precision_cap,
    set_precision_cap,
)

fractions = st.fractions(min_value=-100, max_value=100, max_denominator=10 ** 6)


def enc(lo, hi=None):
    return Enclosure(F(lo), F(hi if hi is not None else lo))


def test_enclosure_basic_properties():
    e = enc("1/3", "1/2")
    assert e.width == F(1, 6)
    assert e.mid == F(5, 12)
    assert F(2, 5) in e
    assert F(3, 5) not in e
    assert e.contains_enclosure(enc("2/5", "9/20"))
    assert not e.contains_enclosure(enc("1/4", "9/20"))


def test_enclosure_orders_endpoints():
    with pytest.raises(ValueError):
        Enclosure(F(1), F(0))


@given(fractions, fractions, fractions, fractions)
def test_enclosure_multiplication_contains_products(a, b, c, d):
    x = Enclosure(min(a, b), max(a, b))
    y = Enclosure(min(c, d), max(c, d))
    z = x * y
    for u in (x.lo, x.hi, x.mid):
        for v in (y.lo, y.hi, y.mid):
            assert u * v in z


@given(fractions, fractions, st.integers(min_value=0, max_value=8))
def test_enclosure_power_contains_powers(a, b, n):
    x = Enclosure(min(a, b), max(a, b))
    assert x.lo ** n in x ** n
    assert x.hi ** n in x ** n
    assert x.mid ** n in x ** n


def test_enclosure_signs_and_ordering():
    assert enc("1/10", "1/2").strictly_inside(0, 1)
    assert not enc(0, "1/2").strictly_inside(0, 1)
    assert enc(2, 3).strictly_above(1)
    assert enc(-3, -2).strictly_below(0)
    assert enc(0, 1).disjoint_from(enc(2, 3))
    assert not enc(0, 1).disjoint_from(enc(1, 2))


def test_escalation_ladder_doubles_then_tops_out_at_cap():
    seen = list(escalate_collect(64, cap=300))
    assert seen == [64, 128, 256, 300]


def escalate_collect(start, cap):
    try:
        for bits in escalate(start, cap=cap, what="test"):
            yield bits
    except PrecisionCapError as exc:
        assert exc.bits_used >= cap


def test_escalation_raises_after_trying_the_cap_itself():
    gen = escalate(64, cap=100, what="test")
    assert next(gen) == 64
    assert next(gen) == 100
    with pytest.raises(PrecisionCapError):
        next(gen)


def test_precision_cap_env_roundtrip():
    old = precision_cap()
    try:
        set_precision_cap(4096)
        assert precision_cap() == 4096
    finally:
        set_precision_cap(old)


@given(fractions)
def test_iv_bridge_rigor(x):
    ctx = ivctx(64)
    e = iv_to_enclosure(iv_from_fraction(ctx, x))
    assert x in e
    assert e.width <= F(1, 2 ** 48)


def test_iv_bridge_third():
    ctx = ivctx(64)
    e = iv_to_enclosure(iv_from_fraction(ctx, F(1, 3)))
    assert e.lo < F(1, 3) < e.hi  # 1/3 is not dyadic: strict containment
    assert e.width < F(1, 2 ** 60)


def test_iv_from_enclosure_hull():
    ctx = ivctx(64)
    x = iv_from_enclosure(ctx, enc("1/3", "1/2"))
    e = iv_to_enclosure(x)
    assert e.lo <= F(1, 3) and F(1, 2) <= e.hi


def test_mpf_tuple_exactness():
    ctx = ivctx(80)
    x = ctx.mpf(7) / ctx.mpf(8)
    e = iv_to_enclosure(x)
    assert e.lo == F(7, 8) == e.hi  # dyadic: exactly representable
    assert mpf_tuple_to_fraction(ctx.mpf(0)._mpi_[0]) == 0
