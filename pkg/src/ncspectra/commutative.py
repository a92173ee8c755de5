"""Commutative oracle: kernel traces of polynomial matrices over product measures.

For commuting variables ``x_1..x_n`` distributed by a product measure whose
coordinates mix finitely many atoms with a non-atomic part, the rank of a
polynomial matrix is almost surely constant on each stratum (choice of atom
or "continuous" per coordinate).  The expected normalized kernel trace is
therefore a finite sum of exact masses times integer rank defects.
"""
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

import numpy as np

from .exact import QQi, as_fraction, to_qqi

__all__ = [
    "MvPolynomial", "CoordinateMeasure", "ProductMeasureSpec", "RankInstability",
    "eval_rank", "exact_rank", "uniform_disk_sampler", "generic_rank",
    "expected_kernel_trace", "check_atiyah_grid",
]


class RankInstability(ArithmeticError):
    """Different ranks were observed across random points of one stratum."""

    def __init__(self, message, stratum, ranks):
        super().__init__(message)
        self.stratum = stratum
        self.ranks = ranks


class MvPolynomial:
    """Polynomial in commuting variables with exact Gaussian-rational coefficients.

    Parameters
    ----------
    terms : dict
        Exponent tuple (length ``n``) -> coefficient.
    n : int
        Number of variables.
    """

    __slots__ = ("terms", "n")

    def __init__(self, terms, n):
        self.n = int(n)
        clean = {}
        for exp, c in dict(terms).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.n or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent vector {exp} for {self.n} variables")
            c = to_qqi(c)
            if c:
                clean[exp] = clean[exp] + c if exp in clean else c
        self.terms = {e: c for e, c in clean.items() if c}

    @classmethod
    def variable(cls, i, n):
        exp = [0] * n
        exp[i] = 1
        return cls({tuple(exp): 1}, n)

    @classmethod
    def constant(cls, c, n):
        return cls({(0,) * n: c}, n)

    def _lift(self, other):
        if isinstance(other, MvPolynomial):
            if other.n != self.n:
                raise ValueError("polynomials in different numbers of variables")
            return other
        return MvPolynomial.constant(other, self.n)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out[e] + c if e in out else c
        return MvPolynomial(out, self.n)

    __radd__ = __add__

    def __neg__(self):
        return MvPolynomial({e: -c for e, c in self.terms.items()}, self.n)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out[e] + c1 * c2 if e in out else c1 * c2
        return MvPolynomial(out, self.n)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = MvPolynomial.constant(1, self.n)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, MvPolynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"MvPolynomial({self.terms!r}, {self.n})"

    def degree(self):
        return max((sum(e) for e in self.terms), default=-1)

    def __call__(self, point):
        """Evaluate at a point; exact when every coordinate is exact."""
        if all(isinstance(v, (int, Fraction, QQi)) for v in point):
            total = QQi(0)
            for e, c in self.terms.items():
                term = c
                for v, k in zip(point, e):
                    if k:
                        term = term * to_qqi(v) ** k
                total = total + term
            return total
        point = np.asarray(point, complex)
        return complex(sum(complex(c) * np.prod(point ** np.array(e))
                           for e, c in self.terms.items()))


def _as_matrix(m):
    rows = [list(r) for r in m]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("polynomial matrix must be rectangular and non-empty")
    return rows


def _numeric(m, point):
    return np.array([[complex(p(point)) if isinstance(p, MvPolynomial) else complex(p)
                      for p in row] for row in m], dtype=complex)


def eval_rank(m, point, rel_tol=1e-9):
    """Numerical rank at a point: Gaussian elimination with full pivoting.

    Pivots below ``rel_tol`` times the largest pivot count as zero.
    """
    a = _numeric(_as_matrix(m), point)
    rows, cols = a.shape
    rank = 0
    largest = 0.0
    for _ in range(min(rows, cols)):
        sub = np.abs(a[rank:, rank:])
        if sub.size == 0:
            break
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        piv = sub[i, j]
        largest = max(largest, piv)
        if piv == 0 or piv <= rel_tol * largest:
            break
        i += rank
        j += rank
        a[[rank, i]] = a[[i, rank]]
        a[:, [rank, j]] = a[:, [j, rank]]
        a[rank + 1:] -= np.outer(a[rank + 1:, rank] / a[rank, rank], a[rank])
        rank += 1
    return rank


def exact_rank(m, point):
    """Rank over Q(i) at an exact point."""
    rows = [[p(point) if isinstance(p, MvPolynomial) else to_qqi(p) for p in row]
            for row in _as_matrix(m)]
    nrows, ncols = len(rows), len(rows[0])
    rank = 0
    for col in range(ncols):
        piv = next((r for r in range(rank, nrows) if rows[r][col]), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = QQi(1) / rows[rank][col]
        for r in range(rank + 1, nrows):
            f = rows[r][col] * inv
            if f:
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[rank])]
        rank += 1
        if rank == nrows:
            break
    return rank


def uniform_disk_sampler(n):
    """Sampler drawing ``n`` independent points uniform on the unit disk."""
    def draw(rng):
        r = np.sqrt(rng.random(n))
        theta = 2 * np.pi * rng.random(n)
        return r * np.exp(1j * theta)
    return draw


def _nvars(m):
    return max((p.n for row in m for p in row if isinstance(p, MvPolynomial)), default=0)


def generic_rank(m, sampler=None, trials=20, seed=0, rel_tol=1e-9, return_ranks=False):
    """Maximum numerical rank over ``trials`` random points.

    Parameters
    ----------
    m : sequence of sequences of MvPolynomial
    sampler : callable, optional
        ``sampler(rng) -> point``; defaults to the unit disk in every variable.
    trials : int
    seed : int
        Seeds a ``numpy.random.Generator`` (PCG64).
    return_ranks : bool
        Also return the list of per-trial ranks.
    """
    m = _as_matrix(m)
    sampler = sampler or uniform_disk_sampler(_nvars(m))
    rng = np.random.default_rng(seed)
    ranks = [eval_rank(m, sampler(rng), rel_tol) for _ in range(trials)]
    best = max(ranks)
    return (best, ranks) if return_ranks else best


@dataclass(frozen=True)
class CoordinateMeasure:
    """Law of one coordinate: exact atoms plus a non-atomic remainder.

    ``atoms`` holds ``(location, mass)`` pairs with exact locations (QQi)
    and rational masses; the non-atomic part is drawn uniformly from the
    unit disk.
    """

    atoms: tuple = ()
    continuous_mass: Fraction = Fraction(1)

    def __post_init__(self):
        atoms = tuple((to_qqi(loc), as_fraction(mass)) for loc, mass in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "continuous_mass", as_fraction(self.continuous_mass))
        if any(m <= 0 for _, m in atoms) or self.continuous_mass < 0:
            raise ValueError("masses must be positive (continuous part non-negative)")
        if sum(m for _, m in atoms) + self.continuous_mass != 1:
            raise ValueError("atom masses plus continuous mass must equal 1")
        locs = [loc for loc, _ in atoms]
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations must be distinct")

    @property
    def d(self):
        """Smallest d with every atom mass in (1/d)Z."""
        return lcm(1, *(m.denominator for _, m in self.atoms))

    def options(self):
        """Strata of this coordinate: ``(label, mass, pinned location or None)``."""
        out = [(f"atom{k}", m, loc) for k, (loc, m) in enumerate(self.atoms)]
        if self.continuous_mass:
            out.append(("continuous", self.continuous_mass, None))
        return out


@dataclass(frozen=True)
class ProductMeasureSpec:
    """Product of independent coordinate laws."""

    coordinates: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "coordinates", tuple(self.coordinates))

    @classmethod
    def continuous(cls, n):
        return cls(tuple(CoordinateMeasure() for _ in range(n)))

    @property
    def n(self):
        return len(self.coordinates)

    @property
    def d(self):
        """``prod_j d_j``."""
        out = 1
        for c in self.coordinates:
            out *= c.d
        return out


def expected_kernel_trace(m, spec, seed=0, trials=20, rel_tol=1e-9):
    """Exact ``E[dim ker M(x)] / l`` for a square polynomial matrix.

    Strata are enumerated in coordinate order (atoms first, then the
    continuous part).  Fully atomic strata use exact rank over Q(i); the
    others use :func:`generic_rank` with the atom coordinates pinned, and
    every trial must agree.

    Raises
    ------
    RankInstability
        When ranks differ across trials within a stratum.
    """
    m = _as_matrix(m)
    ell = len(m)
    if any(len(r) != ell for r in m):
        raise ValueError("expected_kernel_trace needs a square matrix")
    if _nvars(m) > spec.n:
        raise ValueError(f"matrix uses {_nvars(m)} variables, spec has {spec.n}")
    total = Fraction(0)
    root = np.random.SeedSequence(seed)
    strata = list(itertools.product(*(c.options() for c in spec.coordinates)))
    children = root.spawn(len(strata))
    for idx, stratum in enumerate(strata):
        mass = Fraction(1)
        for _, w, _ in stratum:
            mass *= w
        pinned = [loc for _, _, loc in stratum]
        free = [j for j, loc in enumerate(pinned) if loc is None]
        if not free:
            rank = exact_rank(m, pinned)
        else:
            base = np.array([complex(v) if v is not None else 0j for v in pinned])

            def sampler(rng, base=base, free=free):
                point = base.copy()
                point[free] = uniform_disk_sampler(len(free))(rng)
                return point

            rank, ranks = generic_rank(m, sampler, trials, np.random.default_rng(children[idx]),
                                       rel_tol, return_ranks=True)
            if len(set(ranks)) > 1:
                labels = tuple(lbl for lbl, _, _ in stratum)
                raise RankInstability(f"ranks {sorted(set(ranks))} in stratum {labels}",
                                      labels, ranks)
        total += mass * Fraction(ell - rank, ell)
    return total


def check_atiyah_grid(value, d, ell=1):
    """True iff the unnormalized trace ``value * ell`` lies in ``(1/d) Z``.

    ``value`` is a normalized trace in [0, 1]; with ``ell = 1`` this is the
    plain test ``value * d`` integral.
    """
    v = as_fraction(value) * ell * d
    return v.denominator == 1
