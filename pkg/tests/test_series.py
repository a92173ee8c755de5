from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from ncspectra.moments import moment_sequence
from ncspectra.ncpoly import Family, MatrixPolynomial
from ncspectra.series import (AnnihilatorNotFound, AnnihilatorPoly, Dfa, PowerSeries1,
                              characteristic_series, find_annihilator, hadamard, moment_gf,
                              p_semi, ps_inverse, ps_mul, verify_annihilator,
                              verify_proper_system)

FAM = Family.semicircular(2)
S1, S2 = FAM.gens()

series = st.lists(st.fractions(max_denominator=9).filter(lambda q: abs(q) < 9),
                  min_size=1, max_size=8)


@given(series)
def test_inverse(coeffs):
    a = PowerSeries1([1] + coeffs)
    assert ps_mul(a, ps_inverse(a)) == PowerSeries1.one(a.order)


def test_inverse_needs_unit():
    with pytest.raises(ZeroDivisionError):
        ps_inverse(PowerSeries1([0, 1]))


def test_p_semi_proper_system():
    for n in (1, 2):
        s = p_semi(6, n)
        assert verify_proper_system(s)
        assert not verify_proper_system(s.with_coefficient((0, 0), 2))
    assert not verify_proper_system(p_semi(4, 2), n=3)


def test_hadamard_with_regular_language():
    # words with an even number of letter 0
    dfa = Dfa(2, 0, frozenset({0}), {(0, 0): 1, (0, 1): 0, (1, 0): 0, (1, 1): 1})
    chi = characteristic_series(dfa, 4)
    h = hadamard(p_semi(4, 2), chi)
    assert h[(0, 0)] == 1 and h[(0, 1)] == 0 and h[(1, 1, 0, 0)] == 1


def test_known_annihilators():
    m = moment_sequence(S1, 60)
    p = find_annihilator(m, 8, 8, order=40)
    assert p.to_string() == "g^2 - z*g + 1"
    assert verify_annihilator(p, m, 60)
    m = moment_sequence(S1 + S2, 60)
    assert find_annihilator(m, 8, 8, order=40).to_string() == "2*g^2 - z*g + 1"


def test_atom_annihilator():
    blk = MatrixPolynomial([[S1, 0], [0, 0]], FAM)
    m = moment_sequence(blk, 60)
    p = find_annihilator(m, 8, 8, order=40)
    assert verify_annihilator(p, m, 60)
    # G = (1/2) G_S + 1/(2z): g is a root at every z
    import numpy as np
    z = 3 + 1j
    gs = (z - np.sqrt(z * z - 4)) / 2
    assert abs(p(z, 0.5 * gs + 0.5 / z)) < 1e-10


def test_not_found_and_text_roundtrip():
    m = moment_sequence(S1 * S2 * S1 + S2, 30)
    with pytest.raises(AnnihilatorNotFound):
        find_annihilator(m, 1, 1, order=20)
    p = find_annihilator(moment_sequence(S1, 60), 8, 8, order=40)
    assert AnnihilatorPoly.from_text(p.to_text()) == p
    expr, z, g = p.to_sympy()
    assert str(expr.expand()) in {"g**2 - g*z + 1", "-g*z + g**2 + 1"}


def test_moment_gf():
    gf = moment_gf(moment_sequence(S1, 4))
    assert gf.coefficients == (0, 1, 0, 1, 0, 2)
