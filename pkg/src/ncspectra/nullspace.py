"""Exact nullspaces of rational matrices.

Rows are scaled to integers and reduced by fraction-free (Bareiss)
elimination, so no intermediate ever leaves Z.  :func:`nullity_mod_p` is a
cheap filter: the nullity over Q never exceeds the nullity modulo a prime,
so a zero there proves the exact kernel is trivial.
"""
from math import gcd, lcm

import numpy as np
from gmpy2 import mpz

__all__ = ["integer_rows", "nullity_mod_p", "nullspace", "primitive"]

PRIME = 2147483629  # largest prime below 2**31; products fit in int64


def integer_rows(rows):
    """Scale each rational row by the lcm of its denominators."""
    out = []
    for row in rows:
        den = 1
        for x in row:
            den = lcm(den, int(x.denominator))
        out.append([mpz(int(x.numerator) * (den // int(x.denominator))) for x in row])
    return out


def nullity_mod_p(int_rows, ncols, p=PRIME):
    """Dimension of the kernel of the integer matrix reduced modulo ``p``."""
    if not int_rows:
        return ncols
    a = np.array([[int(x) % p for x in row] for row in int_rows], dtype=np.int64)
    nrows = a.shape[0]
    rank = 0
    for col in range(ncols):
        pivot = None
        for r in range(rank, nrows):
            if a[r, col]:
                pivot = r
                break
        if pivot is None:
            continue
        if pivot != rank:
            a[[rank, pivot]] = a[[pivot, rank]]
        inv = pow(int(a[rank, col]), p - 2, p)
        a[rank] = (a[rank] * inv) % p
        below = a[rank + 1:, col].copy()
        nz = np.nonzero(below)[0]
        if nz.size:
            rows = rank + 1 + nz
            a[rows] = (a[rows] - (below[nz, None] * a[rank]) % p) % p
        rank += 1
        if rank == nrows:
            break
    return ncols - rank


def nullspace(int_rows, ncols):
    """Basis of the rational kernel as primitive integer vectors.

    One basis vector per free column of the echelon form, ordered by free
    column index.
    """
    a = [list(row) for row in int_rows if any(row)]
    nrows = len(a)
    pivots = []
    prev = mpz(1)
    rank = 0
    for col in range(ncols):
        pivot = None
        for r in range(rank, nrows):
            if a[r][col]:
                pivot = r
                break
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        pr = a[rank]
        pv = pr[col]
        for r in range(rank + 1, nrows):
            row = a[r]
            f = row[col]
            if f:
                a[r] = [(pv * row[c] - f * pr[c]) // prev for c in range(ncols)]
            elif pv != prev:
                a[r] = [(pv * x) // prev for x in row]
        prev = pv
        pivots.append(col)
        rank += 1
        if rank == nrows:
            break
    free = [c for c in range(ncols) if c not in set(pivots)]
    basis = []
    for fc in free:
        vec = [mpz(0)] * ncols
        vec[fc] = mpz(1)
        # back substitution over Q kept integral by scaling the whole vector
        scale = mpz(1)
        for k in range(len(pivots) - 1, -1, -1):
            pc = pivots[k]
            row = a[k]
            s = sum(row[c] * vec[c] for c in range(pc + 1, ncols))
            if s == 0:
                continue
            # row[pc] * x_pc + s = 0  ->  x_pc = -s / row[pc]
            d = row[pc]
            g = gcd(int(s), int(d))
            num, den = -s // g, d // g
            if den < 0:
                num, den = -num, -den
            if den != 1:
                vec = [v * den for v in vec]
                scale *= den
            vec[pc] = num
        basis.append(primitive(vec))
    return basis


def primitive(vec):
    """Divide an integer vector by its content; first nonzero entry kept as is."""
    g = 0
    for v in vec:
        g = gcd(g, int(v))
    if g in (0, 1):
        return [int(v) for v in vec]
    return [int(v) // g for v in vec]
