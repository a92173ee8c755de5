import numpy as np
import pytest

from ncspectra.cauchy import pencil_density, scan_atoms
from ncspectra.linearization import PencilTransform, linearize
from ncspectra.ncpoly import Family, MatrixPolynomial
from ncspectra.rmt import evaluate_matrix_poly, sample_ensemble

FAM = Family.semicircular(2)
S1, S2 = FAM.gens()


@pytest.mark.parametrize("a", [S1 * S2 * S1 + 2 * S2, S1 * S2 + S2 * S1 - S1 * S1,
                               MatrixPolynomial([[S1, S2 * S1], [S1 * S2, 3]], FAM)],
                         ids=["cubic", "quadratic", "matrix"])
def test_schur_complement_reproduces_polynomial(a):
    pencil = linearize(a)
    sample = sample_ensemble(FAM, 6, seed=3)
    direct = evaluate_matrix_poly(a, sample)
    assert np.allclose(pencil.evaluate(sample.matrices), direct, atol=1e-10)


def test_pencil_semicircle():
    pt = PencilTransform(S1)
    z = np.array([0.3 + 1e-3j, 1.5 + 1e-2j, 3 + 1j])
    g, _, done = pt.cauchy(z)
    r = np.sqrt(z * z - 4)
    exact = np.where(((z - r) / 2).imag < 0, (z - r) / 2, (z + r) / 2)
    assert done.all() and np.max(np.abs(g - exact)) < 1e-6


def test_pencil_density_and_atoms():
    x = np.linspace(-3, 3, 601)
    prof = pencil_density(PencilTransform(S1 + S2), x)
    exact = np.sqrt(np.maximum(8 - x ** 2, 0)) / (4 * np.pi)
    assert not prof.skipped and np.max(np.abs(prof.f - exact)) < 2e-3
    atoms = scan_atoms(PencilTransform(MatrixPolynomial([[S1, 0], [0, 0]], FAM)), -2, 2, 401)
    assert len(atoms) == 1 and abs(atoms[0][0]) < 1e-6 and abs(atoms[0][1] - 0.5) < 1e-3


def test_rejects_unsupported():
    with pytest.raises(ValueError):
        linearize(S1 * S2)
    haar = Family.build([("haar_unitary", {})])
    u = haar.gen(0)
    with pytest.raises(ValueError):
        linearize(u + u.adjoint())
