import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncspectra.cauchy import (AtiyahGrid, InsufficientDecades, NonConvergentLadder,
                              OffGridMass, SpectralMeasureModel, atom_candidates, atom_mass,
                              branch_ladder, density_profile, eval_g_branch, eval_g_series,
                              extrapolate_ladder, integrate_density, log_energy,
                              novikov_shubin, series_tail_bound, snap_to_grid,
                              support_components)
from ncspectra.moments import moment_sequence
from ncspectra.ncpoly import Family, MatrixPolynomial
from ncspectra.series import find_annihilator

FAM = Family.semicircular(2)
S1, S2 = FAM.gens()


def _setup(a):
    m = moment_sequence(a, 60)
    return find_annihilator(m, 8, 8, order=40), m


def _semicircle_g(z):
    r = np.sqrt(z * z - 4 + 0j)
    g = (z - r) / 2
    return np.where(g.imag * np.imag(z) > 0, (z + r) / 2, g)


def test_series_evaluation_far_out():
    m = moment_sequence(S1, 60)
    z = 10 + 1j
    g, bound = eval_g_series(z, m, with_bound=True)
    assert abs(g - _semicircle_g(z)) <= bound + 1e-15
    assert series_tail_bound(z, m) < 1e-30


def test_branch_matches_semicircle_near_axis():
    p, m = _setup(S1)
    x = np.linspace(-2.5, 2.5, 101)
    for eps in (1e-2, 1e-5):
        g = np.array([eval_g_branch(v, eps, p, 2.0, m) for v in x])
        assert np.max(np.abs(g - _semicircle_g(x + 1j * eps))) < 1e-8
    # lower half plane is the conjugate
    assert eval_g_branch(0.3, -1e-3, p, 2.0, m) == np.conj(eval_g_branch(0.3, 1e-3, p, 2.0, m))


def test_density_and_mass():
    p, m = _setup(S1 + S2)
    x = np.linspace(-4, 4, 1601)
    prof = density_profile(p, x, (1e-2, 1e-3, 1e-4, 1e-5, 1e-6), 4.0, m)
    exact = np.sqrt(np.maximum(8 - x ** 2, 0)) / (4 * np.pi)
    assert np.nanmax(np.abs(prof.f - exact)) < 2e-3
    assert abs(integrate_density(x, prof.f) - 1) < 1e-4
    comps = support_components(x, prof.f)
    assert len(comps) == 1 and abs(comps[0][1] - math.sqrt(8)) <= prof.step


def test_atoms():
    blk = MatrixPolynomial([[S1, 0], [0, 0]], FAM)
    p, m = _setup(blk)
    cands = atom_candidates(p, 2.0)
    assert any(abs(c) < 1e-9 for c in cands)
    mass = atom_mass(0.0, p, (1e-2, 1e-3, 1e-4, 1e-5, 1e-6), 2.0, m)
    assert abs(mass - 0.5) < 1e-3
    assert snap_to_grid(mass, AtiyahGrid(1, 2), 1e-2) == Fraction(1, 2)
    p, m = _setup(S1)
    assert sorted(round(c, 6) for c in atom_candidates(p, 2.0)) == [-2, 2]
    assert atom_mass(2.0, p, (1e-2, 1e-3, 1e-4, 1e-5, 1e-6), 2.0, m) < 1e-4


def test_snap_grid():
    assert snap_to_grid(0.4999, AtiyahGrid(1, 2), 1e-2) == Fraction(1, 2)
    assert snap_to_grid(0.0, AtiyahGrid(3, 5), 1e-2) == 0
    with pytest.raises(OffGridMass):
        snap_to_grid(0.27, AtiyahGrid(1, 2), 1e-2)
    with pytest.raises(ValueError):
        AtiyahGrid(0, 1)


@given(st.integers(1, 12), st.integers(0, 12))
def test_snap_exact_grid_points(den, num):
    num = min(num, den)
    assert snap_to_grid(num / den + 1e-4, AtiyahGrid(den, 1), 1e-2) == Fraction(num, den)


def test_extrapolate_ladder():
    eps = [1e-2, 1e-3, 1e-4]
    assert abs(extrapolate_ladder(eps, [0.5 + e for e in eps]) - 0.5) < 1e-9
    with pytest.raises(NonConvergentLadder):
        extrapolate_ladder(eps, [0.1, 0.5, 0.1])


def test_integrate_density_singular_point():
    # f = 1 / (pi sqrt(t (1 - t))): arcsine law, mass 1, blow-up at both ends
    x = np.linspace(0, 1, 2001)
    with np.errstate(divide="ignore"):
        f = 1 / (np.pi * np.sqrt(x * (1 - x)))
    f[[0, -1]] = np.nan
    assert abs(integrate_density(x, f, singular=(0.0, 1.0)) - 1) < 1e-4


def test_integrate_density_sqrt_edges():
    x = np.linspace(-2.5, 2.5, 401) + 0.0123
    f = np.sqrt(np.maximum(4 - x * x, 0)) / (2 * np.pi)
    assert abs(integrate_density(x, f) - 1) < 5e-5


def test_log_energy_and_model():
    x = np.linspace(-0.5, 1.5, 4001)
    f = ((x >= 0) & (x <= 1)).astype(float)
    model = SpectralMeasureModel([], x, f, 1.5)
    assert model.check(1e-3)
    assert abs(model.cdf(0.5) - 0.5) < 1e-3
    le = log_energy(model)
    assert le.status == "finite" and abs(le.value + 1) < 1e-2
    # density ~ 1/t near 0 is not log-integrable
    x = np.linspace(0, 1, 4001)
    with np.errstate(divide="ignore"):
        f = np.where(x > 0, 0.1 / np.maximum(x, 1e-300), 0)
    assert log_energy(SpectralMeasureModel([], x, f, 1.0)).status == "divergent"


def test_novikov_shubin():
    t = np.logspace(-6, -1, 40)
    assert abs(novikov_shubin(zip(t, t ** 1.5), 0.0) - 1.5) < 0.05
    assert novikov_shubin(zip(t, np.where(t < 1e-3, 0.0, t)), 0.0) == "infinity+"
    with pytest.raises(InsufficientDecades):
        novikov_shubin(zip([1e-3, 2e-3, 3e-3], [1e-3, 2e-3, 3e-3]), 0.0)
