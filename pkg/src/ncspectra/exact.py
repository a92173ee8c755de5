"""Exact scalars: rationals and Gaussian rationals.

Rationals are :class:`fractions.Fraction` at every public boundary.  Hot loops
(moment recursion, nullspaces) convert to :class:`gmpy2.mpq` internally.
"""
from fractions import Fraction
from numbers import Rational

__all__ = ["QQi", "as_fraction", "parse_rational", "to_qqi"]


def as_fraction(x):
    """Convert an int, Fraction, mpq or rational string to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    if hasattr(x, "numerator") and hasattr(x, "denominator"):
        return Fraction(int(x.numerator), int(x.denominator))
    raise TypeError(f"cannot convert {x!r} to an exact rational")


def parse_rational(text):
    """Parse ``"3"``, ``"-1/3"`` or ``"0.25"`` into a Fraction.

    Raises ValueError on anything else (floats in scientific notation are
    accepted by Fraction too, which is fine: they are exact decimals).
    """
    text = str(text).strip()
    if not text:
        raise ValueError("empty rational")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed rational {text!r}") from exc


class QQi:
    """Exact complex number with rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", as_fraction(re))
        object.__setattr__(self, "im", as_fraction(im))

    def __setattr__(self, name, value):
        raise AttributeError("QQi is immutable")

    @classmethod
    def coerce(cls, x):
        if isinstance(x, QQi):
            return x
        if isinstance(x, complex):
            raise TypeError("floating complex numbers are not exact")
        return cls(as_fraction(x), 0)

    def __repr__(self):
        if self.im == 0:
            return f"QQi({self.re})"
        return f"QQi({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}i"
        sign = "+" if self.im > 0 else "-"
        return f"({self.re}{sign}{abs(self.im)}i)"

    def __eq__(self, other):
        if isinstance(other, QQi):
            return self.re == other.re and self.im == other.im
        if isinstance(other, (int, Rational)):
            return self.im == 0 and self.re == other
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __neg__(self):
        return QQi(-self.re, -self.im)

    def __add__(self, other):
        try:
            other = QQi.coerce(other)
        except TypeError:
            return NotImplemented
        return QQi(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        try:
            other = QQi.coerce(other)
        except TypeError:
            return NotImplemented
        return QQi(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return QQi.coerce(other) - self

    def __mul__(self, other):
        try:
            other = QQi.coerce(other)
        except TypeError:
            return NotImplemented
        if self.im == 0 and other.im == 0:
            return QQi(self.re * other.re, 0)
        return QQi(self.re * other.re - self.im * other.im,
                   self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = QQi.coerce(other)
        den = other.re * other.re + other.im * other.im
        if den == 0:
            raise ZeroDivisionError("division by exact zero")
        num = self * other.conjugate()
        return QQi(num.re / den, num.im / den)

    def __rtruediv__(self, other):
        return QQi.coerce(other) / self

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = QQi(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def conjugate(self):
        return QQi(self.re, -self.im)

    def is_real(self):
        return self.im == 0

    def abs_bound(self):
        """Rational upper bound ``|re| + |im|`` for the modulus."""
        return abs(self.re) + abs(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))


def to_qqi(x):
    """Coerce ints, rationals, rational strings or ``[re, im]`` pairs."""
    if isinstance(x, QQi):
        return x
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ValueError(f"complex coefficient needs [re, im], got {x!r}")
        return QQi(as_fraction(x[0]), as_fraction(x[1]))
    return QQi.coerce(x)
