import os

import numpy as np
import pytest

from ncspectra.moments import catalan
from ncspectra.ncpoly import Family, MatrixPolynomial
from ncspectra.rmt import (MEMORY_CAP_ENV, MemoryCapExceeded, empirical_spectrum,
                           empirical_vs_exact, evaluate_matrix_poly, jacobian_rank_estimate,
                           sample_ensemble, sample_gue, sample_haar)

FAM = Family.semicircular(2)
S1, S2 = FAM.gens()


def test_samplers():
    rng = np.random.default_rng(0)
    h = sample_gue(50, rng, variance=2)
    assert np.allclose(h, h.conj().T)
    u = sample_haar(30, rng)
    assert np.allclose(u @ u.conj().T, np.eye(30), atol=1e-12)
    with pytest.raises(ValueError):
        sample_ensemble(FAM, 1, 0)


def test_determinism():
    a = sample_ensemble(FAM, 10, seed=11).matrices
    b = sample_ensemble(FAM, 10, seed=11).matrices
    c = sample_ensemble(FAM, 10, seed=12).matrices
    assert all(np.array_equal(p, q) for p, q in zip(a, b))
    assert not np.array_equal(a[0], c[0])


def test_gue_moments_converge():
    errs = []
    for n in (100, 200, 400):
        y = sample_ensemble(Family.semicircular(1), n, seed=5).matrices[0]
        m = empirical_spectrum(y, 6).moments
        errs.append(max(abs(m[2 * k] - catalan(k)) for k in range(4)))
    assert errs[-1] < errs[0] and errs[-1] < 0.1


def test_structural_kernel():
    a = MatrixPolynomial([[S1, 0], [0, 0]], FAM)
    for n in (20, 41):
        y = evaluate_matrix_poly(a, sample_ensemble(FAM, n, seed=1))
        ev = np.linalg.eigvalsh(y)
        assert np.mean(np.abs(ev) < 1e-8) == 0.5


def test_empirical_vs_exact():
    rec = empirical_vs_exact(S1 + S2, 200, 10, 4, seed=3)
    assert [r["k"] for r in rec] == [0, 1, 2, 3, 4]
    assert rec[4]["exact"] == 8 and all(r["within_3se"] for r in rec)
    zero = empirical_vs_exact(0 * S1, 20, 3, 3, seed=3)
    assert all(r["empirical_mean"] == (1 if r["k"] == 0 else 0) for r in zero)


def test_jacobian_rank():
    x1 = Family.semicircular(1).gen(0)
    assert jacobian_rank_estimate([x1], 8, 0).rounded == 1
    assert jacobian_rank_estimate([x1 * x1], 12, 0).rounded == 1
    est = jacobian_rank_estimate([x1 - x1 + 3], 6, 0)
    assert est.rounded == 0 and est.converged


def test_memory_cap(monkeypatch):
    monkeypatch.setenv(MEMORY_CAP_ENV, "100")
    with pytest.raises(MemoryCapExceeded):
        jacobian_rank_estimate([Family.semicircular(1).gen(0)], 10, 0)
