"""Random-matrix cross-checks of the exact engine.

GUE matrices (entry variance ``v/N``) model semicircular generators and
Haar unitaries come from a phase-corrected QR of a complex Ginibre matrix.
All randomness flows from a ``numpy.random.SeedSequence`` so a master seed
fixes every trial.
"""
import math
import os
from dataclasses import dataclass

import numpy as np

from .ncpoly import HAAR, SEMICIRCULAR, FamilyMismatch, MatrixPolynomial, NcPolynomial, jacobian

__all__ = [
    "EnsembleSample", "EmpiricalSpectrum", "MemoryCapExceeded", "MEMORY_CAP_ENV",
    "sample_gue", "sample_haar", "sample_ensemble", "evaluate_word",
    "evaluate_matrix_poly", "empirical_spectrum", "empirical_vs_exact",
    "JacobianRank", "jacobian_rank_estimate",
]

MEMORY_CAP_ENV = "NCSPECTRA_JACOBIAN_MAX_ENTRIES"
DEFAULT_MEMORY_CAP = 20_000_000  # complex entries of the assembled Jacobian


class MemoryCapExceeded(MemoryError):
    """The requested Jacobian matrix would exceed the configured cap."""


@dataclass
class EnsembleSample:
    """One ``N x N`` matrix per generator, drawn from ``seed``."""

    matrices: list
    seed: int
    N: int
    family: object


@dataclass
class EmpiricalSpectrum:
    """Sorted eigenvalues and their first moments."""

    eigenvalues: np.ndarray
    moments: np.ndarray

    def cdf(self, t):
        return np.searchsorted(self.eigenvalues, t, side="right") / self.eigenvalues.size


def _rng(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_gue(N, rng, variance=1.0):
    """Hermitian ``N x N`` with ``E|X_ij|^2 = variance / N``; exactly Hermitian."""
    a = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2)
    h = a + a.conj().T
    return h * (math.sqrt(float(variance)) / math.sqrt(2 * N))


def sample_haar(N, rng):
    """Haar unitary: QR of a Ginibre matrix with the phases of ``diag(R)`` removed."""
    z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


def sample_ensemble(family, N, seed):
    """One independent matrix per generator, in family order."""
    if N < 2:
        raise ValueError("N must be at least 2")
    children = np.random.SeedSequence(seed).spawn(len(family))
    mats = []
    for gen, child in zip(family, children):
        rng = _rng(child)
        if gen.kind == SEMICIRCULAR:
            mats.append(sample_gue(N, rng, gen.variance))
        elif gen.kind == HAAR:
            mats.append(sample_haar(N, rng))
        else:
            raise ValueError(f"no matrix model for {gen.kind} generator {gen.name}")
    return EnsembleSample(mats, seed, N, family)


def evaluate_word(word, mats, N, cache=None):
    """Product of the letter matrices (conjugate transpose for starred letters)."""
    if cache is not None and word in cache:
        return cache[word]
    if not word:
        out = np.eye(N, dtype=complex)
    else:
        head = evaluate_word(word[:-1], mats, N, cache)
        last = word[-1]
        m = mats[last.gen].conj().T if last.starred else mats[last.gen]
        out = head @ m
    if cache is not None:
        cache[word] = out
    return out


def _poly_matrix(p, mats, N, cache):
    out = np.zeros((N, N), complex)
    for w, c in p.terms.items():
        out += complex(c) * evaluate_word(w, mats, N, cache)
    return out


def evaluate_matrix_poly(a, sample):
    """``(l N) x (l' N)`` block matrix of ``a`` evaluated at the sample."""
    if isinstance(a, NcPolynomial):
        a = MatrixPolynomial.scalar(a)
    if a.family != sample.family:
        raise FamilyMismatch("matrix polynomial and sample use different families")
    N = sample.N
    cache = {}
    blocks = [[_poly_matrix(a[i, j], sample.matrices, N, cache) for j in range(a.cols)]
              for i in range(a.rows)]
    return np.block(blocks)


def empirical_spectrum(y, k_max):
    """Eigenvalues of a Hermitian matrix and moments ``mean(lambda^k)``, k = 0..k_max."""
    ev = np.linalg.eigvalsh(y)
    moments = np.array([np.mean(ev ** k) for k in range(k_max + 1)])
    return EmpiricalSpectrum(np.sort(ev), moments)


def empirical_vs_exact(a, N, trials, k_max, seed, exact=None):
    """Trial-averaged empirical moments against the exact moment sequence.

    Returns
    -------
    list of dict
        One record per k with ``k, exact, empirical_mean, stderr, zscore``
        and ``within_3se``.
    """
    from .moments import moment_sequence

    if isinstance(a, NcPolynomial):
        a = MatrixPolynomial.scalar(a)
    if not a.is_selfadjoint():
        raise ValueError("empirical_vs_exact needs a self-adjoint matrix polynomial")
    if exact is None:
        exact = moment_sequence(a, k_max)
    exact_vals = [float(v) for v in exact.values[:k_max + 1]]
    root = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in root.spawn(trials)]
    table = np.empty((trials, k_max + 1))
    for t, s in enumerate(seeds):
        sample = sample_ensemble(a.family, N, s)
        y = evaluate_matrix_poly(a, sample)
        y = (y + y.conj().T) / 2  # remove rounding asymmetry of products
        table[t] = empirical_spectrum(y, k_max).moments
    out = []
    for k in range(k_max + 1):
        mean = float(table[:, k].mean())
        se = float(table[:, k].std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        diff = mean - exact_vals[k]
        if se > 0:
            z = diff / se
        else:
            z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(exact_vals[k])) else math.inf
        out.append({"k": k, "exact": exact_vals[k], "empirical_mean": mean,
                    "stderr": se, "zscore": z, "within_3se": bool(abs(z) <= 3)})
    return out


@dataclass
class JacobianRank:
    """Rank estimate ``rank / N^2`` of the matrix-model Jacobian."""

    value: float
    rounded: int
    converged: bool
    rank: int
    N: int


def _memory_cap():
    raw = os.environ.get(MEMORY_CAP_ENV)
    return int(float(raw)) if raw else DEFAULT_MEMORY_CAP


def jacobian_rank_estimate(polys, N, seed, threshold=1e-8, n=None, window=0.05):
    """Matrix-model estimate of the rank of the noncommutative Jacobian.

    Each entry ``sum c a (x) b`` acts as ``X -> sum c a X b`` on ``N x N``
    matrices, i.e. the ``N^2 x N^2`` matrix ``sum c kron(b^T, a)`` in
    column-major vectorization.  The blocks are assembled into an
    ``n N^2 x m N^2`` matrix whose singular values above ``threshold``
    times the largest count towards the rank.

    Raises
    ------
    MemoryCapExceeded
        When ``n m N^4`` exceeds the cap in ``$NCSPECTRA_JACOBIAN_MAX_ENTRIES``.
    """
    polys = list(polys)
    jac = jacobian(polys, n)
    rows, cols = len(jac), len(polys)
    n2 = N * N
    cap = _memory_cap()
    if rows * cols * n2 * n2 > cap:
        raise MemoryCapExceeded(
            f"Jacobian needs {rows * cols * n2 * n2} entries; cap is {cap} ({MEMORY_CAP_ENV})")
    sample = sample_ensemble(polys[0].family, N, seed)
    cache = {}
    big = np.zeros((rows * n2, cols * n2), complex)
    for i in range(rows):
        for j in range(cols):
            block = big[i * n2:(i + 1) * n2, j * n2:(j + 1) * n2]
            for (left, right), c in jac[i][j].terms.items():
                a = evaluate_word(left, sample.matrices, N, cache)
                b = evaluate_word(right, sample.matrices, N, cache)
                block += complex(c) * np.kron(b.T, a)
    sv = np.linalg.svd(big, compute_uv=False)
    rank = int(np.sum(sv > threshold * sv[0])) if sv.size and sv[0] > 0 else 0
    ratio = rank / n2
    rounded = int(round(ratio))
    return JacobianRank(ratio, rounded, abs(ratio - rounded) <= window, rank, N)
