"""Noncommutative *-polynomials, matrix polynomials and difference quotients.

Polynomials live in the free algebra over a :class:`Family` of generators.
Words are plain tuples of :class:`Letter`; nothing is reduced at this level
(Haar letters ``u u*`` stay as two letters until a trace is taken).

>>> fam = Family.semicircular(2)
>>> s1, s2 = fam.gens()
>>> len(((s1 + s2) * (s1 - s2)).terms)
4
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from .exact import QQi, as_fraction, to_qqi

__all__ = [
    "SEMICIRCULAR", "HAAR", "CUSTOM",
    "Generator", "Family", "Letter", "word_adjoint", "word_str",
    "NcPolynomial", "TensorPolynomial", "MatrixPolynomial",
    "poly_add", "poly_mul", "poly_adjoint", "diff_quotient", "jacobian",
    "matrix_mul", "matrix_adjoint", "matrix_is_selfadjoint",
    "FamilyMismatch",
]

SEMICIRCULAR = "semicircular"
HAAR = "haar_unitary"
CUSTOM = "custom_selfadjoint"
KINDS = (SEMICIRCULAR, HAAR, CUSTOM)


class FamilyMismatch(ValueError):
    """Operands are built over different generator families."""


@dataclass(frozen=True)
class Generator:
    """One free generator.

    ``variance`` is used by semicircular generators, ``moments`` and
    ``norm_bound`` by custom self-adjoint ones.  Haar unitaries ignore both.
    """

    id: int
    kind: str = SEMICIRCULAR
    variance: Fraction = Fraction(1)
    moments: tuple = ()
    norm_bound: Fraction = Fraction(0)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        object.__setattr__(self, "variance", as_fraction(self.variance))
        object.__setattr__(self, "norm_bound", as_fraction(self.norm_bound))
        object.__setattr__(self, "moments",
                           tuple(as_fraction(m) for m in self.moments))
        if not self.name:
            prefix = {SEMICIRCULAR: "s", HAAR: "u", CUSTOM: "x"}[self.kind]
            object.__setattr__(self, "name", f"{prefix}{self.id + 1}")
        if self.kind == SEMICIRCULAR and self.variance <= 0:
            raise ValueError("semicircular variance must be positive")
        if self.kind == CUSTOM:
            if not self.moments or self.moments[0] != 1:
                raise ValueError("custom moments must start with m_0 = 1")
            if self.norm_bound <= 0:
                raise ValueError("custom generator needs a positive norm bound")
            for k, m in enumerate(self.moments[1:], start=1):
                # |m_k| <= R^k  <=>  |m_k|^(1/k) <= R
                if abs(m) > self.norm_bound ** k:
                    raise ValueError(
                        f"norm_bound {self.norm_bound} violated by m_{k} = {m}")

    @property
    def selfadjoint(self):
        return self.kind != HAAR

    def operator_norm_bound(self):
        """Rational upper bound for the operator norm."""
        if self.kind == HAAR:
            return Fraction(1)
        if self.kind == CUSTOM:
            return self.norm_bound
        return 2 * _sqrt_upper(self.variance)


def _sqrt_upper(q):
    """Smallest 'nice' rational >= sqrt(q); exact when q is a square."""
    from math import isqrt

    num, den = q.numerator, q.denominator
    rn, rd = isqrt(num), isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    # ceil(sqrt(num*den*10^12)) / (den*10^6) >= sqrt(num/den)
    scale = 10 ** 6
    r = isqrt(num * den * scale * scale)
    if r * r < num * den * scale * scale:
        r += 1
    return Fraction(r, den * scale)


@dataclass(frozen=True)
class Family:
    """An ordered family of freely independent generators."""

    generators: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        ids = [g.id for g in self.generators]
        if ids != list(range(len(ids))):
            raise ValueError("generator ids must be 0..n-1 in order")
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise ValueError("generator names must be unique")

    @classmethod
    def semicircular(cls, n, variance=1):
        return cls(tuple(Generator(i, SEMICIRCULAR, variance) for i in range(n)))

    @classmethod
    def haar(cls, n):
        return cls(tuple(Generator(i, HAAR) for i in range(n)))

    @classmethod
    def build(cls, specs):
        """Family from ``(kind, kwargs)`` pairs, ids assigned in order."""
        return cls(tuple(Generator(i, kind, **kw)
                         for i, (kind, kw) in enumerate(specs)))

    def __len__(self):
        return len(self.generators)

    def __getitem__(self, i):
        return self.generators[i]

    def __iter__(self):
        return iter(self.generators)

    def kinds(self):
        return {g.kind for g in self.generators}

    def index(self, name):
        for g in self.generators:
            if g.name == name:
                return g.id
        raise KeyError(name)

    def letter(self, gen, starred=False):
        if isinstance(gen, str):
            gen = self.index(gen)
        if not 0 <= gen < len(self.generators):
            raise IndexError(f"generator {gen} out of range")
        return Letter(gen, bool(starred) and not self.generators[gen].selfadjoint)

    def gen(self, i, starred=False):
        """The polynomial consisting of a single letter."""
        return NcPolynomial({(self.letter(i, starred),): QQi(1)}, self)

    def gens(self):
        return tuple(self.gen(i) for i in range(len(self.generators)))

    def one(self):
        return NcPolynomial.constant(1, self)

    def zero(self):
        return NcPolynomial({}, self)

    def parse_word(self, tokens):
        """Word from tokens like ``"s1"``, ``"u2*"``; a string is split on spaces."""
        if isinstance(tokens, str):
            tokens = tokens.split()
        out = []
        for tok in tokens:
            starred = tok.endswith("*")
            out.append(self.letter(tok[:-1] if starred else tok, starred))
        return tuple(out)


class Letter(NamedTuple):
    gen: int
    starred: bool = False


def word_adjoint(word, family):
    """Reverse the word and flip stars on non-self-adjoint letters."""
    return _adjoint_word(word, family)


def word_str(word, family=None):
    if not word:
        return "e"
    parts = []
    for l in word:
        name = family[l.gen].name if family is not None else f"x{l.gen + 1}"
        parts.append(name + ("*" if l.starred else ""))
    return " ".join(parts)


def _normalize_word(word, family):
    return tuple(Letter(l.gen, l.starred and not family[l.gen].selfadjoint)
                 for l in word)


def _adjoint_word(word, family):
    return tuple(Letter(l.gen, (not l.starred) and not family[l.gen].selfadjoint)
                 for l in reversed(word))


class NcPolynomial:
    """Finite map word -> Gaussian-rational coefficient over a family."""

    __slots__ = ("terms", "family", "_hash")

    def __init__(self, terms, family):
        clean = {}
        for w, c in dict(terms).items():
            c = to_qqi(c)
            if not c:
                continue
            w = _normalize_word(tuple(w), family)
            for l in w:
                if not 0 <= l.gen < len(family):
                    raise IndexError(f"generator {l.gen} not in family")
            acc = clean.get(w)
            c = c if acc is None else acc + c
            if c:
                clean[w] = c
            else:
                del clean[w]
        self.terms = clean
        self.family = family
        self._hash = None

    @classmethod
    def constant(cls, c, family):
        return cls({(): c}, family)

    def _check(self, other):
        if not isinstance(other, NcPolynomial):
            raise TypeError(f"expected NcPolynomial, got {type(other).__name__}")
        if other.family != self.family:
            raise FamilyMismatch("polynomials over different generator families")

    def _lift(self, other):
        if isinstance(other, NcPolynomial):
            self._check(other)
            return other
        return NcPolynomial.constant(to_qqi(other), self.family)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out[w] + c if w in out else c
        return NcPolynomial(out, self.family)

    __radd__ = __add__

    def __neg__(self):
        return NcPolynomial({w: -c for w, c in self.terms.items()}, self.family)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, NcPolynomial):
            c = to_qqi(other)
            return NcPolynomial({w: a * c for w, a in self.terms.items()}, self.family)
        self._check(other)
        out = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                w = w1 + w2
                c = c1 * c2
                out[w] = out[w] + c if w in out else c
        return NcPolynomial(out, self.family)

    def __rmul__(self, other):
        c = to_qqi(other)
        return NcPolynomial({w: c * a for w, a in self.terms.items()}, self.family)

    def __pow__(self, k):
        out = self.family.one()
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, NcPolynomial):
            return self.family == other.family and self.terms == other.terms
        try:
            return self == NcPolynomial.constant(to_qqi(other), self.family)
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"NcPolynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for w in sorted(self.terms, key=lambda w: (len(w), w)):
            parts.append(f"{self.terms[w]}*{word_str(w, self.family)}")
        return " + ".join(parts)

    def adjoint(self):
        return NcPolynomial({_adjoint_word(w, self.family): c.conjugate()
                             for w, c in self.terms.items()}, self.family)

    def is_selfadjoint(self):
        return self == self.adjoint()

    def degree(self):
        return max((len(w) for w in self.terms), default=-1)

    def constant_term(self):
        return self.terms.get((), QQi(0))


def poly_add(p, q):
    return p + q


def poly_mul(p, q):
    return p * q


def poly_adjoint(p):
    return p.adjoint()


class TensorPolynomial:
    """Element of Alg (x) Alg: finite map (left word, right word) -> coefficient."""

    __slots__ = ("terms", "family")

    def __init__(self, terms, family):
        clean = {}
        for (a, b), c in dict(terms).items():
            c = to_qqi(c)
            key = (_normalize_word(tuple(a), family), _normalize_word(tuple(b), family))
            if key in clean:
                c = clean[key] + c
            if c:
                clean[key] = c
            else:
                clean.pop(key, None)
        self.terms = clean
        self.family = family

    @classmethod
    def simple(cls, p, q):
        """Elementary tensor p (x) q of two polynomials."""
        if p.family != q.family:
            raise FamilyMismatch("tensor legs over different families")
        return cls({(a, b): ca * cb for a, ca in p.terms.items()
                    for b, cb in q.terms.items()}, p.family)

    def __add__(self, other):
        if other.family != self.family:
            raise FamilyMismatch("tensors over different families")
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out[k] + c if k in out else c
        return TensorPolynomial(out, self.family)

    def __neg__(self):
        return TensorPolynomial({k: -c for k, c in self.terms.items()}, self.family)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, TensorPolynomial):
            c = to_qqi(other)
            return TensorPolynomial({k: v * c for k, v in self.terms.items()},
                                    self.family)
        if other.family != self.family:
            raise FamilyMismatch("tensors over different families")
        out = {}
        for (a, b), c1 in self.terms.items():
            for (c, d), c2 in other.terms.items():
                key = (a + c, b + d)
                v = c1 * c2
                out[key] = out[key] + v if key in out else v
        return TensorPolynomial(out, self.family)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TensorPolynomial):
            return NotImplemented
        return self.family == other.family and self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "TensorPolynomial(0)"
        parts = [f"{c}*({word_str(a, self.family)} (x) {word_str(b, self.family)})"
                 for (a, b), c in sorted(self.terms.items())]
        return "TensorPolynomial(" + " + ".join(parts) + ")"


def diff_quotient(p, j):
    """Free difference quotient with respect to generator ``j``.

    Each occurrence of ``x_j`` in a word splits it into left (x) right.
    """
    fam = p.family
    if not 0 <= j < len(fam):
        raise IndexError(f"generator index {j} out of range")
    if not fam[j].selfadjoint:
        raise ValueError("difference quotients need a self-adjoint generator")
    out = {}
    for w, c in p.terms.items():
        for m, letter in enumerate(w):
            if letter.gen == j:
                key = (w[:m], w[m + 1:])
                out[key] = out[key] + c if key in out else c
    return TensorPolynomial(out, fam)


def jacobian(polys, n=None):
    """``n x m`` array (list of rows) with entry ``[i][j] = d_i P_j``."""
    polys = list(polys)
    if not polys:
        raise ValueError("need at least one polynomial")
    fam = polys[0].family
    for p in polys[1:]:
        if p.family != fam:
            raise FamilyMismatch("jacobian inputs over different families")
    n = len(fam) if n is None else n
    if n > len(fam):
        raise IndexError(f"family has only {len(fam)} generators")
    return [[diff_quotient(p, i) for p in polys] for i in range(n)]


class MatrixPolynomial:
    """Dense rows x cols array of NcPolynomials (row-major)."""

    __slots__ = ("rows", "cols", "entries", "family")

    def __init__(self, entries, family=None):
        rows = [list(r) for r in entries]
        if not rows or not rows[0]:
            raise ValueError("matrix must be non-empty")
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged matrix rows")
        if family is None:
            family = next((e.family for r in rows for e in r
                           if isinstance(e, NcPolynomial)), None)
            if family is None:
                raise ValueError("cannot infer family from scalar entries")
        cells = []
        for r in rows:
            for e in r:
                if isinstance(e, NcPolynomial):
                    if e.family != family:
                        raise FamilyMismatch("matrix entries over different families")
                    cells.append(e)
                else:
                    cells.append(NcPolynomial.constant(to_qqi(e), family))
        self.rows = len(rows)
        self.cols = ncols
        self.entries = tuple(cells)
        self.family = family

    @classmethod
    def identity(cls, n, family):
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)], family)

    @classmethod
    def zeros(cls, rows, cols, family):
        return cls([[0] * cols for _ in range(rows)], family)

    @classmethod
    def scalar(cls, p):
        return cls([[p]], p.family)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i * self.cols + j]

    def row_lists(self):
        return [[self[i, j] for j in range(self.cols)] for i in range(self.rows)]

    @property
    def shape(self):
        return (self.rows, self.cols)

    def is_square(self):
        return self.rows == self.cols

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError(f"dimension mismatch {self.shape} vs {other.shape}")
        return MatrixPolynomial([[self[i, j] + other[i, j] for j in range(self.cols)]
                                 for i in range(self.rows)], self.family)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, MatrixPolynomial):
            return matrix_mul(self, other)
        return MatrixPolynomial([[e * other for e in r] for r in self.row_lists()],
                                self.family)

    def __pow__(self, k):
        if not self.is_square():
            raise ValueError("power of a non-square matrix")
        out = MatrixPolynomial.identity(self.rows, self.family)
        for _ in range(k):
            out = matrix_mul(out, self)
        return out

    def __eq__(self, other):
        if not isinstance(other, MatrixPolynomial):
            return NotImplemented
        return self.shape == other.shape and self.entries == other.entries

    def __hash__(self):
        return hash((self.shape, self.entries))

    def __repr__(self):
        return f"MatrixPolynomial({self.row_lists()!r})"

    def adjoint(self):
        return matrix_adjoint(self)

    def is_selfadjoint(self):
        return matrix_is_selfadjoint(self)


def matrix_mul(a, b):
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch {a.shape} x {b.shape}")
    if a.family != b.family:
        raise FamilyMismatch("matrices over different families")
    zero = a.family.zero()
    out = []
    for i in range(a.rows):
        row = []
        for j in range(b.cols):
            acc = zero
            for k in range(a.cols):
                x, y = a[i, k], b[k, j]
                if x and y:
                    acc = acc + x * y
            row.append(acc)
        out.append(row)
    return MatrixPolynomial(out, a.family)


def matrix_adjoint(a):
    return MatrixPolynomial([[a[i, j].adjoint() for i in range(a.rows)]
                             for j in range(a.cols)], a.family)


def matrix_is_selfadjoint(a):
    return a.is_square() and a == matrix_adjoint(a)
