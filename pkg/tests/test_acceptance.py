"""Acceptance criteria 1-12, one test each, tolerances pinned.

Every test records a one-line outcome (see ``conftest.py``); the summary is
printed at the end of the pytest run.  Run this file alone with
``pytest tests/test_acceptance.py -v``.
"""
import itertools
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from ncspectra.analysis import analyze
from ncspectra.cauchy import (DEFAULT_EPS_LADDER, ATOM_THRESHOLD, SpectralMeasureModel,
                              density_profile, log_energy, novikov_shubin, scan_atoms)
from ncspectra.commutative import (CoordinateMeasure, MvPolynomial, ProductMeasureSpec,
                                   check_atiyah_grid, expected_kernel_trace)
from ncspectra.linearization import PencilTransform
from ncspectra.moments import TraceOracle, catalan, moment_sequence, pairing_oracle
from ncspectra.ncpoly import Family, MatrixPolynomial
from ncspectra.rmt import empirical_vs_exact, jacobian_rank_estimate
from ncspectra.series import (find_annihilator, p_semi, verify_annihilator,
                              verify_proper_system)

REGRESSION = Path(__file__).parent / "regression"
SEED = 20240101


def _random_selfadjoint(fam, rng, max_len, coeff=2):
    """``q + q*`` for a random q with words of length 1..max_len."""
    n = len(fam)
    q = fam.zero()
    for _ in range(int(rng.integers(1, 4))):
        length = int(rng.integers(1, max_len + 1))
        word = fam.one()
        for g in rng.integers(0, n, size=length):
            word = word * fam.gen(int(g))
        c = int(rng.integers(1, coeff + 1)) * int(rng.choice([-1, 1]))
        q = q + c * word
    return q + q.adjoint()


# -- 1 -----------------------------------------------------------------------------

def test_criterion_01_moment_exactness():
    t0 = time.perf_counter()
    fam1 = Family.semicircular(1)
    oracle1 = TraceOracle(fam1)
    s = fam1.letter(0)
    catalan_ok = all(oracle1.trace_word((s,) * (2 * k)).re == catalan(k) for k in range(7))
    catalan_ok &= [catalan(k) for k in range(6)] == [1, 1, 2, 5, 14, 42]
    fam = Family.semicircular(2)
    oracle = TraceOracle(fam)
    letters = [fam.letter(0), fam.letter(1)]
    count = 0
    mismatches = []
    for length in range(11):
        for w in itertools.product(letters, repeat=length):
            count += 1
            if oracle.trace_word(w).re != pairing_oracle(w, fam):
                mismatches.append(w)
    dt = time.perf_counter() - t0
    ok = catalan_ok and not mismatches and count == 2047 and dt < 60
    record(1, ok, f"Catalan k<=6 exact: {catalan_ok}; {count} words, "
                  f"{len(mismatches)} mismatches; {dt:.1f}s")
    assert ok


# -- 2 -----------------------------------------------------------------------------

def test_criterion_02_proper_system():
    rng = np.random.default_rng(SEED)
    results = []
    for n in (1, 2, 3):
        series = p_semi(8, n)
        passes = verify_proper_system(series)
        words = list(series.coefficients)
        if n == 3:
            picks = rng.choice(len(words), size=60, replace=False)
            words = [words[i] for i in sorted(picks)]
        survived = [w for w in words
                    for delta in (Fraction(1), Fraction(-1, 7))
                    if verify_proper_system(series.with_coefficient(w, series[w] + delta))]
        results.append((n, passes, len(words), len(survived)))
    ok = all(p and s == 0 for _, p, _, s in results)
    record(2, ok, "; ".join(f"n={n}: verified={p}, {k} perturbed words, {s} undetected"
                            for n, p, k, s in results))
    assert ok


# -- 3 -----------------------------------------------------------------------------

def test_criterion_03_algebraic_cauchy_transform():
    fam = Family.semicircular(2)
    s1, s2 = fam.gens()
    found = {}
    for name, a, expected in (("S", s1, "g^2 - z*g + 1"), ("S1+S2", s1 + s2, "2*g^2 - z*g + 1")):
        m = moment_sequence(a, 60)
        p = find_annihilator(m, 8, 8, order=40)
        found[name] = (p.to_string(), p.to_string() == expected and verify_annihilator(p, m, 60))
    mat = MatrixPolynomial([[s1, s2], [s2, -s1]], fam)
    m = moment_sequence(mat, 60)
    p = find_annihilator(m, 8, 8, order=40)
    mat_ok = p.deg_z <= 8 and p.deg_g <= 8 and verify_annihilator(p, m, 60)
    # recorded once from this search; a change in the found polynomial is a regression
    artifact = REGRESSION / "annihilator_2x2_S1_S2.txt"
    regression_ok = artifact.read_text() == p.to_text()
    ok = all(v for _, v in found.values()) and mat_ok and regression_ok
    record(3, ok, f"S: {found['S'][0]}; S1+S2: {found['S1+S2'][0]}; "
                  f"[[S1,S2],[S2,-S1]]: {p.to_string()} (verified to 60: {mat_ok}, "
                  f"matches regression artifact: {regression_ok})")
    assert ok


# -- 4 -----------------------------------------------------------------------------

def test_criterion_04_stieltjes_inversion():
    fam = Family.semicircular(1)
    s = fam.gen(0)
    t0 = time.perf_counter()
    m = moment_sequence(s, 60)
    p = find_annihilator(m, 8, 8, order=40)
    x = np.linspace(-2, 2, 2001)
    prof = density_profile(p, x, DEFAULT_EPS_LADDER, 2.0, m)
    dt = time.perf_counter() - t0
    sel = np.abs(x) <= 1.9
    exact = np.sqrt(4 - x[sel] ** 2) / (2 * np.pi)
    err = float(np.max(np.abs(prof.f[sel] - exact)))
    ok = min(DEFAULT_EPS_LADDER) <= 1e-6 and np.all(np.isfinite(prof.f[sel])) and err <= 2e-3 \
        and dt < 30
    record(4, ok, f"max |f - semicircle| on |x| <= 1.9: {err:.2e} (tol 2e-3); {dt:.1f}s")
    assert ok


# -- 5 -----------------------------------------------------------------------------

def test_criterion_05_atiyah_grid_atoms():
    fam = Family.semicircular(2)
    s1 = fam.gen(0)
    res = analyze(MatrixPolynomial([[s1, 0], [0, 0]], fam), d=1)
    atoms = [(round(a.location, 9), a.snapped) for a in res.atoms]
    block_ok = atoms == [(0.0, Fraction(1, 2))] and res.passed
    rng = np.random.default_rng(SEED)
    found = []
    for _ in range(10):
        a = _random_selfadjoint(fam, rng, 3)
        assert a.degree() >= 1
        m = moment_sequence(a, 40)
        radius = m.support_radius()
        hits = scan_atoms(PencilTransform(a), -radius, radius, 2001, ATOM_THRESHOLD)
        found.append((str(a), hits))
    clean = all(not hits for _, hits in found)
    ok = block_ok and clean
    record(5, ok, f"[[S,0],[0,0]] atoms {atoms}; random degree<=3 suite: "
                  f"{sum(bool(h) for _, h in found)}/10 with atoms")
    assert block_ok, atoms
    assert clean, [f for f in found if f[1]]


# -- 6 -----------------------------------------------------------------------------

def _random_matrix(fam, rng, ell):
    entries = [[None] * ell for _ in range(ell)]
    for i in range(ell):
        entries[i][i] = _random_selfadjoint(fam, rng, 1) + int(rng.integers(-6, 7))
        for j in range(i + 1, ell):
            q = int(rng.integers(-2, 3)) * fam.gen(int(rng.integers(0, len(fam)))) \
                + int(rng.integers(-2, 3))
            entries[i][j] = q
            entries[j][i] = q.adjoint()
    return MatrixPolynomial(entries, fam)


def test_criterion_06_support_structure():
    fam = Family.semicircular(2)
    s1 = fam.gen(0)
    res = analyze(MatrixPolynomial([[s1, 0], [0, s1 + 5]], fam))
    comps = [(c.start, c.end, c.snapped) for c in res.components]
    diag_ok = len(comps) == 2 and all(c[2] == Fraction(1, 2) for c in comps) and res.passed
    rng = np.random.default_rng(SEED)
    suite = []
    for k in range(6):
        ell = 2 if k < 4 else 3
        r = analyze(_random_matrix(fam, rng, ell), grid=2001)
        suite.append((ell, len(r.components), r.route))
    suite_ok = all(n <= ell for ell, n, _ in suite)
    ok = diag_ok and suite_ok
    record(6, ok, f"diag(S, S+5): {len(comps)} components, masses "
                  f"{[str(c[2]) for c in comps]}; random suite (l, #components): "
                  f"{[(e, n) for e, n, _ in suite]}")
    assert diag_ok, comps
    assert suite_ok, suite


# -- 7 -----------------------------------------------------------------------------

def test_criterion_07_free_convolution_atomless():
    fam = Family.semicircular(2)
    s1, s2 = fam.gens()
    res = analyze(s1 + s2)
    h = res.density.step
    ends = [(c.start, c.end) for c in res.components]
    r = 2 * math.sqrt(2)
    edges_ok = len(ends) == 1 and abs(ends[0][0] + r) <= h and abs(ends[0][1] - r) <= h
    ok = not res.atoms and edges_ok
    record(7, ok, f"atoms {res.atoms}; support {ends} vs +-{r:.6f} (grid step {h:.2e})")
    assert ok


# -- 8 -----------------------------------------------------------------------------

def test_criterion_08_monte_carlo():
    fam = Family.semicircular(2)
    s1, s2 = fam.gens()
    lines = []
    ok = True
    for name, a in (("S", s1), ("S1+S2", s1 + s2), ("S1S2+S2S1", s1 * s2 + s2 * s1)):
        rec = empirical_vs_exact(a, 400, 20, 8, SEED)
        worst = max(abs(r["zscore"]) for r in rec)
        good = all(r["within_3se"] for r in rec)
        ok &= good
        lines.append(f"{name}: max |z| {worst:.2f}")
    again = empirical_vs_exact(s1, 400, 20, 8, SEED)
    first = empirical_vs_exact(s1, 400, 20, 8, SEED)
    deterministic = again == first
    ok &= deterministic
    record(8, ok, "; ".join(lines) + f"; deterministic: {deterministic}")
    assert ok


# -- 9 -----------------------------------------------------------------------------

def test_criterion_09_jacobian_rank():
    fam1 = Family.semicircular(1)
    fam2 = Family.semicircular(2)
    x1 = fam1.gen(0)
    y1, y2 = fam2.gens()
    cases = (("[x1]", [x1]), ("[x1x1]", [x1 * x1]), ("[x1x2+x2x1]", [y1 * y2 + y2 * y1]))
    out = []
    for name, polys in cases:
        est = jacobian_rank_estimate(polys, 20, SEED)
        out.append((name, est.value, est.rounded, est.converged))
    ok = all(conv and r >= 1 for _, _, r, conv in out)
    record(9, ok, "; ".join(f"{n}: {v:.3f} -> {r}" for n, v, r, _ in out))
    assert ok


# -- 10 ----------------------------------------------------------------------------

def _random_measure(rng, d_target):
    """Coordinate law with atoms whose masses have lcm of denominators d_target."""
    if d_target == 1:
        return CoordinateMeasure((), 1) if rng.random() < 0.5 else \
            CoordinateMeasure(((int(rng.integers(-2, 3)), 1),), 0)
    locs = rng.choice(np.arange(-3, 4), size=2, replace=False)
    k = int(rng.integers(1, d_target))
    return CoordinateMeasure(((int(locs[0]), Fraction(k, d_target)),),
                             Fraction(d_target - k, d_target)) if rng.random() < 0.5 else \
        CoordinateMeasure(((int(locs[0]), Fraction(k, d_target)),
                           (int(locs[1]), Fraction(d_target - k, d_target))), 0)


def _random_mv_matrix(rng, ell, n):
    xs = [MvPolynomial.variable(i, n) for i in range(n)]
    rows = []
    for _ in range(ell):
        row = []
        for _ in range(ell):
            p = MvPolynomial.constant(int(rng.integers(-2, 3)), n)
            for _ in range(int(rng.integers(0, 3))):
                mono = MvPolynomial.constant(int(rng.integers(-2, 3)), n)
                for _ in range(int(rng.integers(1, 4))):
                    mono = mono * xs[int(rng.integers(0, n))]
                p = p + mono
            row.append(p)
        rows.append(row)
    if ell > 1 and rng.random() < 0.5:
        # force structure: second row = x_0 * first row
        rows[1] = [xs[0] * p for p in rows[0]]
    return rows


def test_criterion_10_commutative_atiyah():
    rng = np.random.default_rng(SEED)
    factorizations = [(1,), (2,), (3,), (2, 3), (3, 2), (6,), (2, 1), (1, 3), (1, 1, 2)]
    failures = []
    values = []
    for case in range(25):
        ds = factorizations[case % len(factorizations)]
        n = len(ds)
        spec = ProductMeasureSpec(tuple(_random_measure(rng, d) for d in ds))
        assert spec.d <= 6
        ell = int(rng.integers(1, 4))
        mat = _random_mv_matrix(rng, ell, n)
        runs = [expected_kernel_trace(mat, spec, seed=s) for s in range(5)]
        value = runs[0]
        values.append(value)
        if len(set(runs)) != 1 or not check_atiyah_grid(value, spec.d, ell):
            failures.append((case, runs, spec.d, ell))
    ok = not failures
    nontrivial = sum(v != 0 for v in values)
    record(10, ok, f"25 cases (d <= 6, 5 seeds each): {len(failures)} failures, "
                   f"{nontrivial} with nonzero kernel trace")
    assert ok, failures


# -- 11 ----------------------------------------------------------------------------

def test_criterion_11_log_energy():
    fam = Family.semicircular(2)
    s1, s2 = fam.gens()
    out = {}
    for name, a in (("S^2", s1 * s1), ("(S1+S2)^2", (s1 + s2) * (s1 + s2))):
        res = analyze(a)
        out[name] = log_energy(res.model)
    x = np.linspace(-0.5, 1.5, 4001)
    f = ((x >= 0) & (x <= 1)).astype(float)
    uniform = log_energy(SpectralMeasureModel([], x, f, 1.5))
    ok = all(e.status == "finite" and math.isfinite(e.value) for e in out.values()) \
        and uniform.status == "finite" and abs(uniform.value + 1) <= 1e-2
    record(11, ok, "; ".join(f"{k}: {v.value:.4f} ({v.status})" for k, v in out.items())
           + f"; uniform[0,1]: {uniform.value:.5f}")
    assert ok


# -- 12 ----------------------------------------------------------------------------

def test_criterion_12_novikov_shubin():
    # t^2 must stay above the 1e-14 resolution on the smallest decade
    t = np.logspace(-6, -1, 50)
    got = {alpha: novikov_shubin(zip(t, 0.3 + t ** alpha), 0.3) for alpha in (0.5, 1.0, 2.0)}
    gap = novikov_shubin(zip(t, np.where(t < 1e-2, 0.25, 0.25 + t)), 0.25)
    ok = all(abs(v - a) <= 0.05 * a for a, v in got.items()) and gap == "infinity+"
    record(12, ok, "; ".join(f"alpha={a}: {v:.4f}" for a, v in got.items())
           + f"; isolated zero: {gap}")
    assert ok
