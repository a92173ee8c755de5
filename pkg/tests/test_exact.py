from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from ncspectra.exact import QQi, as_fraction, parse_rational, to_qqi

rationals = st.fractions(max_denominator=50).filter(lambda q: abs(q) < 1000)
gaussian = st.builds(QQi, rationals, rationals)


def test_parse_rational():
    assert parse_rational("1/3") == Fraction(1, 3)
    assert parse_rational(" -7 ") == -7
    assert parse_rational("0.25") == Fraction(1, 4)
    for bad in ("", "1/0", "abc", "1//2"):
        with pytest.raises(ValueError):
            parse_rational(bad)


def test_as_fraction_rejects_floats_and_bools():
    with pytest.raises(TypeError):
        as_fraction(True)
    with pytest.raises(TypeError):
        as_fraction(0.5)


def test_qqi_basics():
    i = QQi(0, 1)
    assert i * i == QQi(-1)
    assert (1 + i) / (1 - i) == i
    assert str(QQi(Fraction(1, 3))) == "1/3"
    assert complex(QQi(1, -2)) == 1 - 2j
    assert QQi(2).is_real() and not i.is_real()
    assert i.conjugate() == QQi(0, -1)
    with pytest.raises(TypeError):
        QQi.coerce(1j)
    with pytest.raises(AttributeError):
        i.re = 3


@given(gaussian, gaussian, gaussian)
def test_field_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    if b:
        assert (a / b) * b == a


@given(gaussian)
def test_conjugation_and_hash(a):
    assert (a * a.conjugate()).is_real()
    assert hash(a) == hash(QQi(a.re, a.im))
    assert to_qqi(a) == a
