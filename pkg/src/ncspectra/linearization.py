"""Numeric Cauchy transforms of semicircular matrix polynomials via linear pencils.

A self-adjoint matrix polynomial ``A`` in free semicirculars is written as
the Schur complement of a self-adjoint *linear* pencil

    L = b_0 + sum_j x_j b_j,   top-left l x l block = A after elimination,

built from a prefix trie of the monomials.  The operator-valued Cauchy
transform of ``L`` solves the fixed point

    W = (Lambda - b_0 - sum_j v_j b_j W b_j)^{-1},

with ``Lambda = diag(z I_l, i delta I)``; the normalized trace of the
top-left block of ``W`` is ``G_A(z)`` up to O(delta).  This route needs no
annihilator and is used when none exists inside the degree budget.
"""
import numpy as np

from .ncpoly import SEMICIRCULAR, MatrixPolynomial, NcPolynomial

__all__ = ["LinearPencil", "linearize", "PencilTransform", "NotConverged"]


class NotConverged(RuntimeError):
    """The fixed-point iteration stalled at some evaluation points."""

    def __init__(self, message, points):
        super().__init__(message)
        self.points = points


class LinearPencil:
    """Hermitian coefficient matrices ``b0, bs`` and the size of the output block."""

    def __init__(self, b0, bs, ell, variances):
        self.b0 = b0
        self.bs = bs
        self.ell = ell
        self.variances = variances

    @property
    def size(self):
        return self.b0.shape[0]

    def evaluate(self, xs):
        """Schur complement at concrete Hermitian matrices ``xs`` (one per generator)."""
        n = xs[0].shape[0]
        eye = np.eye(n)
        big = np.kron(self.b0, eye) + sum(np.kron(b, x) for b, x in zip(self.bs, xs))
        k = self.ell * n
        a, u, q = big[:k, :k], big[k:, :k], big[k:, k:]
        return a - u.conj().T @ np.linalg.solve(q, u)


def linearize(a):
    """Self-adjoint linear pencil whose Schur complement is ``a``.

    Parameters
    ----------
    a : NcPolynomial or MatrixPolynomial
        Self-adjoint, over a purely semicircular family.
    """
    if isinstance(a, NcPolynomial):
        a = MatrixPolynomial.scalar(a)
    fam = a.family
    if not fam.kinds() <= {SEMICIRCULAR}:
        raise ValueError("linear pencils are implemented for semicircular families only")
    if not a.is_selfadjoint():
        raise ValueError("linearize needs a self-adjoint matrix polynomial")
    ell = a.rows
    n = len(fam)
    b0 = np.zeros((ell, ell), complex)
    lin = [np.zeros((ell, ell), complex) for _ in range(n)]
    # q collects one representative of each {term, adjoint term} pair
    q = {}
    seen = set()
    for r in range(ell):
        for c in range(ell):
            for w, coef in a[r, c].terms.items():
                coef = complex(coef)
                g = tuple(l.gen for l in w)
                if len(g) == 0:
                    b0[r, c] += coef
                elif len(g) == 1:
                    lin[g[0]][r, c] += coef
                else:
                    key, partner = (r, c, g), (c, r, g[::-1])
                    if key in seen:
                        continue
                    q[key] = q.get(key, 0) + (coef / 2 if key == partner else coef)
                    seen.add(key)
                    seen.add(partner)
    # trie nodes: (row, proper prefix of length >= 1)
    nodes = sorted({(r, g[:k]) for (r, _, g) in q for k in range(1, len(g))},
                   key=lambda s: (s[0], len(s[1]), s[1]))
    idx = {s: i for i, s in enumerate(nodes)}
    m = len(nodes)
    size = ell + 2 * m
    base = np.zeros((size, size), complex)
    base[:ell, :ell] = b0
    bs = [np.zeros((size, size), complex) for _ in range(n)]
    for j in range(n):
        bs[j][:ell, :ell] = lin[j]
    ua = lambda i: ell + i          # rows carrying u (and T* in the last block)
    vb = lambda i: ell + m + i      # rows carrying -v (and T)
    for (r, s), i in idx.items():
        if len(s) == 1:
            bs[s[0]][r, ua(i)] += 1
            bs[s[0]][ua(i), r] += 1
        base[vb(i), ua(i)] += 1
        base[ua(i), vb(i)] += 1
        parent = (r, s[:-1])
        if len(s) > 1:
            p = idx[parent]
            bs[s[-1]][vb(p), ua(i)] -= 1
            bs[s[-1]][ua(i), vb(p)] -= 1
    for (r, c, g), coef in q.items():
        i = idx[(r, g[:-1])]
        j = g[-1]
        bs[j][vb(i), c] -= coef
        bs[j][c, vb(i)] -= np.conj(coef)
    variances = [float(gen.variance) for gen in fam]
    return LinearPencil(base, bs, ell, variances)


class PencilTransform:
    """Batched evaluation of ``G_A`` through the pencil fixed point.

    Parameters
    ----------
    a : NcPolynomial or MatrixPolynomial
    delta : float
        Imaginary regularization on the auxiliary block.
    tol : float
        Stopping tolerance on the max-entry change of ``W``.
    maxit : int
        Fixed-point iterations per call before switching to Newton; points
        where Newton also fails are reported, not hidden.
    """

    def __init__(self, a, delta=1e-10, tol=1e-11, maxit=500):
        self.pencil = linearize(a)
        self.delta = delta
        self.tol = tol
        self.maxit = maxit

    def solve(self, z, w0=None):
        """Fixed point ``W`` at each ``z``; returns ``(W, converged_mask)``."""
        z = np.atleast_1d(np.asarray(z, complex))
        pen = self.pencil
        size, ell = pen.size, pen.ell
        npts = z.size
        lam = np.zeros((npts, size, size), complex)
        diag = np.arange(size)
        lam[:, diag, diag] = 1j * self.delta
        lam[:, np.arange(ell), np.arange(ell)] = z[:, None]
        lam -= pen.b0
        if w0 is None:
            w = np.broadcast_to(-1j * np.eye(size), (npts, size, size)).copy()
        else:
            w = np.array(w0, complex)
        active = np.arange(npts)
        done = np.zeros(npts, bool)
        terms = [(v, b) for v, b in zip(pen.variances, pen.bs) if np.any(b)]
        for _ in range(self.maxit):
            if active.size == 0:
                break
            wa = w[active]
            eta = sum(v * (b @ wa @ b) for v, b in terms)
            new = 0.5 * (wa + np.linalg.inv(lam[active] - eta))
            err = np.abs(new - wa).reshape(active.size, -1).max(axis=1)
            w[active] = new
            fin = err < self.tol
            done[active[fin]] = True
            active = active[~fin]
        # Jacobians hold size^4 entries per point; bound the batch memory
        chunk = max(1, int(2e7 // size ** 4))
        for start in range(0, active.size, chunk):
            idx = active[start:start + chunk]
            w[idx], done[idx] = self._newton(lam[idx], w[idx], terms)
        return w, done

    def _newton(self, lam, w, terms, steps=30):
        """Newton on ``W M(W) = I`` from stalled iterates.

        Slow contraction near the real axis is the usual reason for a stall;
        the iterate is then close enough for Newton.  A result is accepted
        only when the residual is small and ``Im W`` stays negative
        semidefinite, i.e. on the Cauchy-transform branch.
        """
        npts, size = w.shape[0], w.shape[1]
        eye = np.eye(size)
        w = w.copy()
        for _ in range(steps):
            m = lam - sum(v * (b @ w @ b) for v, b in terms)
            res = w @ m - eye
            # row-major vec: vec(H M) = (I kron M^T) vec H, vec(W b H b) = (W b kron b^T) vec H
            jac = np.einsum("ij,nlk->nikjl", eye, m).reshape(npts, size * size, size * size)
            for v, b in terms:
                wb = w @ b
                jac -= v * np.einsum("nij,lk->nikjl", wb, b).reshape(
                    npts, size * size, size * size)
            try:
                step = np.linalg.solve(jac, res.reshape(npts, -1, 1))
            except np.linalg.LinAlgError:
                break
            w -= step.reshape(npts, size, size)
            if np.abs(step).max() < self.tol:
                break
        m = lam - sum(v * (b @ w @ b) for v, b in terms)
        resid = np.abs(w @ m - eye).reshape(npts, -1).max(axis=1)
        im = (w - np.conj(np.swapaxes(w, 1, 2))) / 2j
        top = np.linalg.eigvalsh(im).max(axis=1)
        scale = np.abs(w).reshape(npts, -1).max(axis=1)
        ok = (resid < 1e3 * self.tol) & (top <= 1e-8 * np.maximum(scale, 1.0))
        return w, ok

    def cauchy(self, z, w0=None, strict=False):
        """``(G_A(z), W, converged)``; with ``strict`` a stalled point raises."""
        w, done = self.solve(z, w0)
        ell = self.pencil.ell
        g = np.trace(w[:, :ell, :ell], axis1=1, axis2=2) / ell
        if strict and not done.all():
            raise NotConverged("pencil fixed point did not converge",
                               np.flatnonzero(~done))
        return g, w, done
