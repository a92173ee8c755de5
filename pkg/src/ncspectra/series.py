"""Formal power series and algebraic annihilators of moment generating functions.

One-variable series (:class:`PowerSeries1`) carry exact coefficients up to a
truncation order.  Noncommutative series (:class:`NcSeries`) store every word
up to a maximal length over the alphabet ``x_1..x_n``.

The annihilator search works in ``w = 1/z``: with ``G(z) = sum_k m_k z^{-k-1}``
a polynomial ``P(z, g) = sum c_ij z^i g^j`` annihilates ``G`` iff the series
``sum c_ij w^(D_z - i) G^j`` vanishes, which is a linear condition on the
``c_ij``.
"""
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import gcd

import numpy as np
from gmpy2 import mpq

from .exact import QQi
from .moments import MomentSequence, TraceOracle
from .ncpoly import SEMICIRCULAR, Family
from .nullspace import integer_rows, nullity_mod_p, nullspace

__all__ = [
    "PowerSeries1", "ps_add", "ps_mul", "ps_inverse",
    "NcSeries", "p_semi", "verify_proper_system", "hadamard",
    "Dfa", "characteristic_series",
    "moment_gf", "AnnihilatorPoly", "AnnihilatorNotFound",
    "find_annihilator", "verify_annihilator",
]

DEFAULT_MARGIN = 10


# -- one-variable series ----------------------------------------------------


class PowerSeries1:
    """Truncated series c_0 + c_1 z + ... + c_K z^K + O(z^(K+1))."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients, order=None):
        coeffs = [_exact(c) for c in coefficients]
        if order is not None:
            coeffs = (coeffs + [Fraction(0)] * (order + 1))[:order + 1]
        if not coeffs:
            raise ValueError("a power series needs at least c_0")
        self.coefficients = tuple(coeffs)

    @property
    def order(self):
        return len(self.coefficients) - 1

    @classmethod
    def one(cls, order):
        return cls([1], order)

    def __getitem__(self, k):
        return self.coefficients[k]

    def __eq__(self, other):
        if not isinstance(other, PowerSeries1):
            return NotImplemented
        return self.coefficients == other.coefficients

    def __repr__(self):
        return f"PowerSeries1({list(map(str, self.coefficients))})"

    def __add__(self, other):
        return ps_add(self, other)

    def __mul__(self, other):
        return ps_mul(self, other)


def _exact(c):
    if isinstance(c, (Fraction, QQi)):
        return c
    if isinstance(c, int):
        return Fraction(c)
    return Fraction(c)


def ps_add(a, b):
    k = min(a.order, b.order)
    return PowerSeries1([a[i] + b[i] for i in range(k + 1)])


def ps_mul(a, b):
    k = min(a.order, b.order)
    out = []
    for n in range(k + 1):
        acc = Fraction(0)
        for i in range(n + 1):
            x, y = a[i], b[n - i]
            if x and y:
                acc = x * y + acc
        out.append(acc)
    return PowerSeries1(out)


def ps_inverse(a):
    if not a[0]:
        raise ZeroDivisionError("series with zero constant term is not invertible")
    inv0 = 1 / a[0]
    out = [inv0]
    for n in range(1, a.order + 1):
        acc = Fraction(0)
        for i in range(1, n + 1):
            if a[i]:
                acc = a[i] * out[n - i] + acc
        out.append(-acc * inv0)
    return PowerSeries1(out)


# -- noncommutative series --------------------------------------------------


class NcSeries:
    """Coefficients of every word of length <= ``max_length`` over ``n`` letters.

    Words are tuples of letter indices ``0..n-1``.
    """

    __slots__ = ("n", "max_length", "coefficients")

    def __init__(self, n, max_length, coefficients):
        self.n = n
        self.max_length = max_length
        coeffs = {}
        for w in all_words(n, max_length):
            coeffs[w] = coefficients.get(w, 0) if isinstance(coefficients, dict) \
                else coefficients(w)
        self.coefficients = coeffs

    def __getitem__(self, word):
        word = tuple(word)
        if len(word) > self.max_length:
            raise KeyError(f"word longer than {self.max_length}")
        return self.coefficients[word]

    def with_coefficient(self, word, value):
        coeffs = dict(self.coefficients)
        coeffs[tuple(word)] = value
        return NcSeries(self.n, self.max_length, coeffs)

    def __eq__(self, other):
        if not isinstance(other, NcSeries):
            return NotImplemented
        return (self.n, self.max_length) == (other.n, other.max_length) and \
            self.coefficients == other.coefficients

    def __len__(self):
        return len(self.coefficients)


def all_words(n, max_length):
    for k in range(max_length + 1):
        yield from product(range(n), repeat=k)


def p_semi(max_length, family):
    """Series of traces ``sum_w tau(w(S_1..S_n)) w`` up to length ``max_length``."""
    if isinstance(family, int):
        family = Family.semicircular(family)
    if family.kinds() != {SEMICIRCULAR}:
        raise ValueError("p_semi needs a pure semicircular family")
    oracle = TraceOracle(family)

    def coeff(word):
        return oracle.trace_word(tuple(family.letter(g) for g in word)).re

    return NcSeries(len(family), max_length, coeff)


def verify_proper_system(series, n=None):
    """Check that ``series - e`` solves z = sum_j x_j z x_j z + x_j^2 z + x_j z x_j + x_j^2.

    Every word up to the stored length is checked: the right-hand side at a
    word only involves strictly shorter words, so the check is complete.
    """
    n = series.n if n is None else n
    if n != series.n:
        return False
    c = series.coefficients

    def z(w):
        return c[w] - (1 if not w else 0)

    if z(()) != 0:
        return False
    for w in c:
        if not w:
            continue
        j = w[0]
        rhs = Fraction(0)
        for m in range(1, len(w)):
            if w[m] == j:
                rhs += z(w[1:m]) * z(w[m + 1:])
        if len(w) >= 2 and w[1] == j:
            rhs += z(w[2:])
        if len(w) >= 2 and w[-1] == j:
            rhs += z(w[1:-1])
        if w == (j, j):
            rhs += 1
        if z(w) != rhs:
            return False
    return True


def hadamard(p, q):
    if (p.n, p.max_length) != (q.n, q.max_length):
        raise ValueError("hadamard product needs equal alphabets and lengths")
    return NcSeries(p.n, p.max_length,
                    {w: p.coefficients[w] * q.coefficients[w] for w in p.coefficients})


@dataclass(frozen=True)
class Dfa:
    """Deterministic automaton over letters ``0..n-1``; missing edges reject."""

    n: int
    start: int
    accepting: frozenset
    transitions: dict

    def accepts(self, word):
        state = self.start
        for a in word:
            state = self.transitions.get((state, a))
            if state is None:
                return False
        return state in self.accepting


def characteristic_series(dfa, max_length):
    """0/1 series of the regular language recognized by ``dfa``."""
    return NcSeries(dfa.n, max_length, lambda w: 1 if dfa.accepts(w) else 0)


# -- Cauchy transform and annihilators ---------------------------------------


def moment_gf(m):
    """``sum_k m_k z^(k+1)``; evaluating at 1/z gives the Cauchy transform."""
    values = m.values if isinstance(m, MomentSequence) else tuple(m)
    return PowerSeries1([Fraction(0)] + [Fraction(v) for v in values])


class AnnihilatorNotFound(RuntimeError):
    """No annihilating polynomial inside the degree budget."""

    def __init__(self, message, attempted):
        super().__init__(message)
        self.attempted = attempted


class AnnihilatorPoly:
    """P(z, g) = sum_ij c[i][j] z^i g^j with integer, content-normalized coefficients."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients):
        rows = [[int(x) for x in row] for row in coefficients]
        if not rows or not any(any(r) for r in rows):
            raise ValueError("annihilator must not be identically zero")
        width = max(len(r) for r in rows)
        rows = [r + [0] * (width - len(r)) for r in rows]
        while not any(rows[-1]):
            rows.pop()
        while not any(r[-1] for r in rows):
            rows = [r[:-1] for r in rows]
        self.coefficients = tuple(tuple(r) for r in _normalize(rows))

    @property
    def deg_z(self):
        return len(self.coefficients) - 1

    @property
    def deg_g(self):
        return len(self.coefficients[0]) - 1

    def __eq__(self, other):
        if not isinstance(other, AnnihilatorPoly):
            return NotImplemented
        return self.coefficients == other.coefficients

    def __hash__(self):
        return hash(self.coefficients)

    def __repr__(self):
        return f"AnnihilatorPoly({self.to_string()})"

    def to_string(self):
        terms = []
        for j in range(self.deg_g, -1, -1):
            for i in range(self.deg_z, -1, -1):
                c = self.coefficients[i][j]
                if not c:
                    continue
                mono = "*".join(x for x in (
                    "" if i == 0 else ("z" if i == 1 else f"z^{i}"),
                    "" if j == 0 else ("g" if j == 1 else f"g^{j}")) if x)
                if mono:
                    coef = "" if abs(c) == 1 else f"{abs(c)}*"
                    body = coef + mono
                else:
                    body = str(abs(c))
                terms.append(("-" if c < 0 else "+", body))
        head = ("-" if terms[0][0] == "-" else "") + terms[0][1]
        return head + "".join(f" {s} {b}" for s, b in terms[1:])

    def g_slice(self, j):
        """Coefficients of g^j as a polynomial in z (lowest degree first)."""
        return [self.coefficients[i][j] for i in range(self.deg_z + 1)]

    def g_coefficients(self, z):
        """Complex coefficients of P(z, .) highest g-power first (np.roots order)."""
        c = np.array(self.coefficients, dtype=float)  # (deg_z+1, deg_g+1)
        zp = np.power(complex(z), np.arange(self.deg_z + 1))
        return (zp @ c)[::-1]

    def __call__(self, z, g):
        c = np.array(self.coefficients, dtype=float)
        zp = np.power(complex(z), np.arange(self.deg_z + 1))
        gp = np.power(complex(g), np.arange(self.deg_g + 1))
        return complex(zp @ c @ gp)

    def to_text(self):
        """``# P(z, g) = ...`` comment, ``deg_z deg_g``, then one row per power of z."""
        lines = [f"# P(z, g) = {self.to_string()}", f"{self.deg_z} {self.deg_g}"]
        lines += [" ".join(str(x) for x in row) for row in self.coefficients]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.split() for ln in text.strip().splitlines()
                 if ln.strip() and not ln.lstrip().startswith("#")]
        dz, dg = int(lines[0][0]), int(lines[0][1])
        rows = [[int(x) for x in ln] for ln in lines[1:]]
        if len(rows) != dz + 1 or any(len(r) != dg + 1 for r in rows):
            raise ValueError(f"annihilator text does not match degrees {dz} {dg}")
        return cls(rows)

    def to_sympy(self):
        import sympy

        z, g = sympy.symbols("z g")
        expr = sum(c * z ** i * g ** j for i, row in enumerate(self.coefficients)
                   for j, c in enumerate(row) if c)
        return expr, z, g


def _normalize(rows):
    g = 0
    for r in rows:
        for x in r:
            g = gcd(g, x)
    rows = [[x // g for x in r] for r in rows]
    # leading term: highest g-degree, then highest z-degree
    lead = 0
    for j in range(len(rows[0]) - 1, -1, -1):
        for i in range(len(rows) - 1, -1, -1):
            if rows[i][j]:
                lead = rows[i][j]
                break
        if lead:
            break
    if lead < 0:
        rows = [[-x for x in r] for r in rows]
    return rows


def _cauchy_powers(values, deg_g, nterms):
    """Coefficients in w of G^j, j = 0..deg_g, through w^(nterms-1), G = sum m_k w^(k+1)."""
    g1 = [mpq(0)] * nterms
    for k, m in enumerate(values):
        if k + 1 < nterms:
            g1[k + 1] = mpq(m.numerator, m.denominator)
    powers = [[mpq(1)] + [mpq(0)] * (nterms - 1)]
    for _ in range(deg_g):
        prev = powers[-1]
        nxt = [mpq(0)] * nterms
        for i, a in enumerate(prev):
            if not a:
                continue
            for k in range(1, nterms - i):
                b = g1[k]
                if b:
                    nxt[i + k] += a * b
        powers.append(nxt)
    return powers


def _system(powers, deg_z, deg_g, nterms):
    """Rows: coefficient of w^n of sum c_ij w^(deg_z - i) G^j; columns (i, j) row-major."""
    rows = []
    for n in range(nterms):
        row = []
        for i in range(deg_z + 1):
            shift = deg_z - i
            for j in range(deg_g + 1):
                k = n - shift
                row.append(powers[j][k] if k >= 0 else mpq(0))
        rows.append(row)
    return rows


def _degree_boxes(max_z, max_g):
    """(D_z, D_g) by increasing total degree, smaller D_g first."""
    for total in range(1, max_z + max_g + 1):
        for dg in range(1, max_g + 1):
            dz = total - dg
            if 0 <= dz <= max_z:
                yield dz, dg


def find_annihilator(m, max_deg_z=8, max_deg_g=8, order=None, margin=DEFAULT_MARGIN):
    """Smallest-degree integer polynomial P with P(z, G(z)) = 0 through ``order``.

    Uses moments ``m_0..m_order`` (all supplied moments by default).  Degree
    boxes too large for ``order`` given the safety margin are skipped and
    recorded; if nothing is found :class:`AnnihilatorNotFound` lists every
    attempted box.
    """
    values = m.values if isinstance(m, MomentSequence) else tuple(Fraction(v) for v in m)
    order = len(values) - 1 if order is None else order
    if order > len(values) - 1:
        raise ValueError(f"order {order} exceeds the {len(values) - 1} supplied moments")
    values = values[:order + 1]
    nterms = order + 2  # G known exactly through w^(order+1)
    powers = _cauchy_powers(values, max_deg_g, nterms)
    attempted = []
    for dz, dg in _degree_boxes(max_deg_z, max_deg_g):
        unknowns = (dz + 1) * (dg + 1)
        if order < unknowns + margin:
            attempted.append((dz, dg, "skipped: order too small"))
            continue
        rows = integer_rows(_system(powers, dz, dg, nterms))
        if nullity_mod_p(rows, unknowns) == 0:
            attempted.append((dz, dg, "no kernel"))
            continue
        basis = nullspace(rows, unknowns)
        if not basis:
            attempted.append((dz, dg, "no kernel"))
            continue
        vec = basis[0]
        coeffs = [vec[i * (dg + 1):(i + 1) * (dg + 1)] for i in range(dz + 1)]
        if not any(coeffs[i][j] for i in range(dz + 1) for j in range(1, dg + 1)):
            attempted.append((dz, dg, "kernel free of g"))
            continue
        return AnnihilatorPoly(coeffs)
    raise AnnihilatorNotFound(
        f"no annihilator with deg_z <= {max_deg_z}, deg_g <= {max_deg_g} "
        f"at matching order {order}", attempted)


def verify_annihilator(p, m, order):
    """True iff P(z, G) vanishes through w^(order+1) using moments up to ``order``."""
    values = m.values if isinstance(m, MomentSequence) else tuple(Fraction(v) for v in m)
    if order > len(values) - 1:
        raise ValueError(f"need moments through {order}, have {len(values) - 1}")
    nterms = order + 2
    powers = _cauchy_powers(values[:order + 1], p.deg_g, nterms)
    for n in range(nterms):
        acc = mpq(0)
        for i, row in enumerate(p.coefficients):
            k = n - (p.deg_z - i)
            if k < 0:
                continue
            for j, c in enumerate(row):
                if c:
                    acc += c * powers[j][k]
        if acc:
            return False
    return True
