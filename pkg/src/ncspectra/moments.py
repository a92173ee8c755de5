"""Exact traces of words, polynomials and matrix polynomials.

Three routes are used depending on the letters of a word:

* pure semicircular words go through the first-letter splitting recursion
  ``tau(S_j w) = v_j * sum_{w = u x_j v} tau(u) tau(v)``;
* pure Haar words are reduced in the free group (trace 1 iff trivial);
* everything else goes through alternating centering, which only needs the
  single-variable *-moments of each generator.

:func:`pairing_oracle` is an independent brute-force check for the first
route and is never used to compute anything else.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import numpy as np
from gmpy2 import mpq

from .exact import QQi
from .ncpoly import CUSTOM, HAAR, SEMICIRCULAR, MatrixPolynomial, NcPolynomial

__all__ = [
    "TraceOracle", "MomentSequence", "MomentOrderError",
    "catalan", "pairing_oracle", "moment_sequence", "matrix_trace",
    "norm_bound",
]


class MomentOrderError(ValueError):
    """A custom generator was queried beyond its supplied moments."""


@lru_cache(maxsize=None)
def catalan(k):
    """k-th Catalan number (exact int)."""
    out = 1
    for i in range(k):
        out = out * 2 * (2 * i + 1) // (i + 2)
    return out


class TraceOracle:
    """Tracial state on the free product of a generator family.

    The cache maps canonical words to exact values and is shared by all
    queries on this instance.  Single dict assignments are atomic under the
    GIL, which is all the concurrency guarantee the cache needs: a key is
    only ever written with its one correct value.
    """

    def __init__(self, family):
        self.family = family
        self.cache = {(): QQi(1)}
        self._semi_cache = {(): mpq(1)}
        self._variance = [mpq(g.variance.numerator, g.variance.denominator)
                          for g in family]

    # -- words -------------------------------------------------------------

    def trace_word(self, word):
        word = tuple(word)
        hit = self.cache.get(word)
        if hit is not None:
            return hit
        for l in word:
            if not 0 <= l.gen < len(self.family):
                raise KeyError(f"unknown generator id {l.gen}")
        kinds = {self.family[l.gen].kind for l in word}
        if kinds == {SEMICIRCULAR}:
            v = self._semi(tuple(l.gen for l in word))
            value = QQi(Fraction(int(v.numerator), int(v.denominator)))
        elif kinds == {HAAR}:
            value = QQi(1 if not _free_reduce(word) else 0)
        else:
            value = self._centered(word)
        self.cache[word] = value
        return value

    def _semi(self, gens):
        hit = self._semi_cache.get(gens)
        if hit is not None:
            return hit
        n = len(gens)
        if n % 2:
            return mpq(0)
        j = gens[0]
        rest = gens[1:]
        acc = mpq(0)
        # w = u x_j v: u must have even length for a nonzero term
        for m in range(0, n - 1, 2):
            if rest[m] == j:
                left = self._semi(rest[:m])
                if left:
                    acc += left * self._semi(rest[m + 1:])
        acc *= self._variance[j]
        self._semi_cache[gens] = acc
        return acc

    def _block_trace(self, gen, block):
        g = self.family[gen]
        k = len(block)
        if g.kind == HAAR:
            exp = sum(-1 if l.starred else 1 for l in block)
            return QQi(1 if exp == 0 else 0)
        if g.kind == SEMICIRCULAR:
            if k % 2:
                return QQi(0)
            return QQi(g.variance ** (k // 2) * catalan(k // 2))
        if k >= len(g.moments):
            raise MomentOrderError(
                f"generator {g.name} has moments up to order {len(g.moments) - 1}, "
                f"needed {k}")
        return QQi(g.moments[k])

    def _centered(self, word):
        blocks = _blocks(word)
        # traciality: merge a trailing block into the leading one
        if len(blocks) > 1 and blocks[0][0] == blocks[-1][0]:
            gen, last = blocks.pop()
            blocks[0] = (gen, last + blocks[0][1])
            return self.trace_word(sum((b for _, b in blocks), ()))
        if len(blocks) == 1:
            return self._block_trace(*blocks[0])
        consts = [self._block_trace(g, b) for g, b in blocks]
        live = [i for i, c in enumerate(consts) if c]
        # tau(prod (b_i - c_i)) = 0 for alternating centered factors, so
        # tau(b_1...b_r) = -sum_{T nonempty} prod_{i in T}(-c_i) tau(prod_{i not in T} b_i)
        total = QQi(0)
        for size in range(1, len(live) + 1):
            for chosen in combinations(live, size):
                coeff = QQi(1)
                for i in chosen:
                    coeff = coeff * (-consts[i])
                skip = set(chosen)
                rest = sum((b for i, (_, b) in enumerate(blocks) if i not in skip), ())
                total = total + coeff * self.trace_word(rest)
        return -total

    # -- linear extensions ----------------------------------------------------

    def trace_poly(self, p):
        if p.family != self.family:
            raise ValueError("polynomial family differs from the oracle family")
        total = QQi(0)
        for w, c in p.terms.items():
            t = self.trace_word(w)
            if t:
                total = total + c * t
        return total

    def matrix_trace(self, a, normalized=True):
        if not a.is_square():
            raise ValueError(f"trace of non-square {a.rows}x{a.cols} matrix")
        total = QQi(0)
        for i in range(a.rows):
            total = total + self.trace_poly(a[i, i])
        return total / a.rows if normalized else total


def _blocks(word):
    out = []
    for l in word:
        if out and out[-1][0] == l.gen:
            out[-1] = (l.gen, out[-1][1] + (l,))
        else:
            out.append((l.gen, (l,)))
    return out


def _free_reduce(word):
    stack = []
    for l in word:
        sym = (l.gen, -1 if l.starred else 1)
        if stack and stack[-1] == (l.gen, -sym[1]):
            stack.pop()
        else:
            stack.append(sym)
    return stack


def matrix_trace(a, normalized=True, oracle=None):
    oracle = oracle or TraceOracle(a.family)
    return oracle.matrix_trace(a, normalized)


def pairing_oracle(word, family):
    """Sum over non-crossing pair partitions whose pairs join equal generators.

    Each pair contributes the variance of its generator.  Brute force: every
    color-consistent pairing is generated, crossings are then rejected.
    """
    gens = []
    for l in word:
        g = family[l.gen]
        if g.kind != SEMICIRCULAR:
            raise ValueError(f"pairing oracle needs semicircular letters, got {g.name}")
        gens.append(l.gen)
    n = len(gens)
    if n % 2:
        return Fraction(0)

    total = Fraction(0)

    def pairings(free, acc):
        if not free:
            yield list(acc)
            return
        first, rest = free[0], free[1:]
        for idx, other in enumerate(rest):
            if gens[other] != gens[first]:
                continue
            acc.append((first, other))
            yield from pairings(rest[:idx] + rest[idx + 1:], acc)
            acc.pop()

    for pairing in pairings(tuple(range(n)), []):
        if _crossing(pairing):
            continue
        weight = Fraction(1)
        for a, _ in pairing:
            weight *= family[gens[a]].variance
        total += weight
    return total


def _crossing(pairing):
    for (a, b), (c, d) in combinations(pairing, 2):
        if a > c:
            a, b, c, d = c, d, a, b
        if a < c < b < d:
            return True
    return False


@dataclass(frozen=True)
class MomentSequence:
    """Exact moments m_0..m_K with a rational operator-norm bound."""

    values: tuple
    element_norm_bound: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(Fraction(v) for v in self.values))
        object.__setattr__(self, "element_norm_bound",
                           Fraction(self.element_norm_bound))

    @property
    def order(self):
        return len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def truncate(self, order):
        return MomentSequence(self.values[:order + 1], self.element_norm_bound)

    def hankel(self):
        """Float Hankel matrix ``[m_{i+j}]`` of the largest square size."""
        size = (len(self.values) + 1) // 2
        return np.array([[float(self.values[i + j]) for j in range(size)]
                         for i in range(size)])

    def hankel_min_eigenvalue(self):
        """Smallest eigenvalue of the Hankel matrix after rescaling by the norm bound.

        Moments are divided by R^k so entries stay O(1) and the check is
        meaningful at a fixed absolute tolerance.
        """
        r = float(self.element_norm_bound) or 1.0
        size = (len(self.values) + 1) // 2
        h = np.array([[float(self.values[i + j]) / r ** (i + j) for j in range(size)]
                      for i in range(size)])
        return float(np.linalg.eigvalsh(h).min())

    def support_radius(self, delta=1e-10):
        """Radius R with ``mu(|t| > R) <= delta``, from Markov's inequality.

        ``mu(|t| > R) <= m_2k / R^2k`` for every stored even moment; the
        smallest such R (capped by the norm bound) is returned.
        """
        best = float(self.element_norm_bound)
        log_delta = math.log(delta)
        for k in range(2, len(self.values), 2):
            m = self.values[k]
            if m <= 0:
                return 0.0
            log_m = math.log(m.numerator) - math.log(m.denominator)
            best = min(best, math.exp((log_m - log_delta) / k))
        return best


def norm_bound(a):
    """Sum over entries of sum |coeff| * prod(letter norm bounds)."""
    if isinstance(a, NcPolynomial):
        a = MatrixPolynomial.scalar(a)
    fam = a.family
    bounds = [g.operator_norm_bound() for g in fam]
    total = Fraction(0)
    for entry in a.entries:
        for w, c in entry.terms.items():
            term = c.abs_bound()
            for l in w:
                term *= bounds[l.gen]
            total += term
    return total


def moment_sequence(a, order, oracle=None):
    """Normalized moments ``tr(A^k)``, k = 0..order, of a self-adjoint matrix."""
    if isinstance(a, NcPolynomial):
        a = MatrixPolynomial.scalar(a)
    if not a.is_selfadjoint():
        raise ValueError("moment_sequence needs a self-adjoint matrix polynomial")
    fam = a.family
    if fam.kinds() <= {SEMICIRCULAR}:
        values = _semicircular_moments(a, order)
    else:
        oracle = oracle or TraceOracle(fam)
        values = []
        power = MatrixPolynomial.identity(a.rows, fam)
        for k in range(order + 1):
            if k:
                power = power * a
            t = oracle.matrix_trace(power, normalized=True)
            if not t.is_real():
                raise ArithmeticError(f"non-real moment {t} for self-adjoint input")
            values.append(t.re)
    return MomentSequence(tuple(values), norm_bound(a))


# -- fast semicircular engine -----------------------------------------------
#
# A^k is read as paths in a weighted automaton: hub states 0..l-1 are matrix
# indices, every term of entry (r, c) with word x_{i1}..x_{iL} becomes a chain
# r -> s_1 -> ... -> c whose first edge carries the coefficient and one power
# of t.  Constant terms are epsilon edges between hubs.  The generating
# function H(t) = sum_w tau(w) M(w) then satisfies
#     H = I + sum_j v_j M_j H M_j H,
# the matrix form of the splitting recursion, and tr(A^k) is read off the hub
# diagonal of D H with D = (I - tC)^{-1}.


class _CMat:
    """Exact complex matrix as a pair of mpq object arrays (imag may be None)."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        self.re = re
        self.im = im

    @classmethod
    def zeros(cls, n):
        return cls(_zeros(n))

    def __add__(self, other):
        im = _add_opt(self.im, other.im)
        return _CMat(self.re + other.re, im)

    def __matmul__(self, other):
        re = self.re.dot(other.re)
        im = None
        if self.im is not None and other.im is not None:
            re = re - self.im.dot(other.im)
        if self.im is not None:
            im = self.im.dot(other.re)
        if other.im is not None:
            t = self.re.dot(other.im)
            im = t if im is None else im + t
        return _CMat(re, im)

    def scale(self, s):
        return _CMat(self.re * s, None if self.im is None else self.im * s)

    def equals(self, other):
        if not np.array_equal(self.re, other.re):
            return False
        a = self.im if self.im is not None else None
        b = other.im if other.im is not None else None
        if a is None and b is None:
            return True
        n = self.re.shape[0]
        a = a if a is not None else _zeros(n)
        b = b if b is not None else _zeros(n)
        return np.array_equal(a, b)


def _zeros(n):
    out = np.empty((n, n), dtype=object)
    out.fill(mpq(0))
    return out


def _add_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _mpq(f):
    return mpq(f.numerator, f.denominator)


def _build_automaton(a):
    fam = a.family
    ell = a.rows
    edges = []  # (src, dst, gen, coeff or None, weighted)
    consts = []
    nstates = ell
    for r in range(ell):
        for c in range(ell):
            for w, coeff in a[r, c].terms.items():
                if not w:
                    consts.append((r, c, coeff))
                    continue
                chain = [r] + list(range(nstates, nstates + len(w) - 1)) + [c]
                nstates += len(w) - 1
                for pos, letter in enumerate(w):
                    edges.append((chain[pos], chain[pos + 1], letter.gen,
                                  coeff if pos == 0 else None))
    n = nstates
    ngen = len(fam)
    m0 = [[_zeros(n), None] for _ in range(ngen)]   # t^0 edges
    m1 = [[_zeros(n), None] for _ in range(ngen)]   # t^1 edges
    for src, dst, gen, coeff in edges:
        if coeff is None:
            m0[gen][0][src, dst] += 1
        else:
            target = m1[gen]
            target[0][src, dst] += _mpq(coeff.re)
            if coeff.im:
                if target[1] is None:
                    target[1] = _zeros(n)
                target[1][src, dst] += _mpq(coeff.im)
    cmat = [_zeros(n), None]
    for r, c, coeff in consts:
        cmat[0][r, c] += _mpq(coeff.re)
        if coeff.im:
            if cmat[1] is None:
                cmat[1] = _zeros(n)
            cmat[1][r, c] += _mpq(coeff.im)
    return (n, [_CMat(*x) for x in m0], [_CMat(*x) for x in m1], _CMat(*cmat))


def _semicircular_moments(a, order):
    fam = a.family
    ell = a.rows
    n, m0, m1, cmat = _build_automaton(a)
    ngen = len(fam)
    var = [_mpq(g.variance) for g in fam]
    eye = _zeros(n)
    for i in range(n):
        eye[i, i] = mpq(1)
    ident = _CMat(eye)
    has_const = bool(np.any(cmat.re != 0)) or cmat.im is not None

    # powers of C: D = sum_k t^k C^k
    cpow = [ident]
    for _ in range(order):
        cpow.append(cpow[-1] @ cmat if has_const else _CMat.zeros(n))

    def mtilde(j, deg):
        # (M_j D)_deg = M_j0 C^deg + M_j1 C^(deg-1)
        out = m0[j] @ cpow[deg]
        if deg >= 1:
            out = out + m1[j] @ cpow[deg - 1]
        return out

    used = [j for j in range(ngen) if np.any(m0[j].re != 0) or np.any(m1[j].re != 0)
            or m0[j].im is not None or m1[j].im is not None]
    mt = {j: [mtilde(j, d) for d in range(order + 1)] if has_const
          else [m0[j], m1[j]] for j in used}

    def mt_at(j, d):
        seq = mt[j]
        return seq[d] if d < len(seq) else None

    h = []
    b = {j: [] for j in used}
    for deg in range(order + 1):
        # part of B_j,deg = sum_a Mt_j,a H_{deg-a} that does not involve H_deg
        fixed_b = {}
        for j in used:
            acc = _CMat.zeros(n)
            for a_ in range(1, deg + 1):
                mj = mt_at(j, a_)
                if mj is not None:
                    acc = acc + mj @ h[deg - a_]
            fixed_b[j] = acc
        hd = ident if deg == 0 else _CMat.zeros(n)
        base = hd
        for _ in range(4 * n + 4):
            bd = {j: fixed_b[j] + mt_at(j, 0) @ hd for j in used}
            new = base
            for j in used:
                seq = b[j] + [bd[j]]
                acc = _CMat.zeros(n)
                for m in range(deg + 1):
                    acc = acc + seq[m] @ seq[deg - m]
                new = new + acc.scale(var[j])
            if new.equals(hd):
                break
            hd = new
        else:
            raise RuntimeError("semicircular recursion did not stabilize")
        h.append(hd)
        for j in used:
            b[j].append(fixed_b[j] + mt_at(j, 0) @ hd)

    values = []
    for k in range(order + 1):
        tr_re = mpq(0)
        tr_im = mpq(0)
        for a_ in range(k + 1):
            if a_ and not has_const:
                break
            prod = cpow[a_] @ h[k - a_]
            for r in range(ell):
                tr_re += prod.re[r, r]
                if prod.im is not None:
                    tr_im += prod.im[r, r]
        if tr_im != 0:
            raise ArithmeticError("non-real moment for self-adjoint input")
        tr_re /= ell
        values.append(Fraction(int(tr_re.numerator), int(tr_re.denominator)))
    return values
