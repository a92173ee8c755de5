from fractions import Fraction

from ncspectra.analysis import analyze
from ncspectra.ncpoly import CUSTOM, Family, MatrixPolynomial

FAM = Family.semicircular(2)
S1, S2 = FAM.gens()


def test_semicircle_pipeline():
    res = analyze(S1, grid=801)
    assert res.passed and res.route == "annihilator"
    assert len(res.components) == 1 and res.components[0].snapped == 1


def test_block_atom_and_components():
    res = analyze(MatrixPolynomial([[S1, 0], [0, S1 + 5]], FAM), grid=1001)
    assert res.passed
    assert [c.snapped for c in res.components] == [Fraction(1, 2), Fraction(1, 2)]


def test_pencil_route_used_without_annihilator():
    res = analyze(S1 * S2 * S1 + S2, deg_z=1, deg_g=1, grid=801)
    assert res.route == "pencil" and res.passed
    assert any(step == "annihilator" for step, _ in res.skipped)


def test_custom_family_without_annihilator_is_skipped():
    # symmetric Bernoulli law: G = z / (z^2 - 1) needs deg_z = 2
    fam = Family.build([(CUSTOM, {"moments": tuple(1 - k % 2 for k in range(31)),
                                  "norm_bound": 1})])
    x = fam.gen(0)
    res = analyze(x, order=4, deg_z=1, deg_g=1)
    assert res.route is None
    assert any("density" in step for step, _ in res.skipped)
