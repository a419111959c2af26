"""Coefficient arithmetic for the two coefficient modes.

Float mode stores Python ``float``/``complex`` values.  Exact mode stores
:class:`fractions.Fraction` for real coefficients, :class:`GaussianRational`
for genuinely complex ones and :class:`QuadraticSurd` for elements of a real
quadratic field such as ``Q(sqrt 5)`` (enough for frequencies like the golden
mean).  Values whose irrational or imaginary part cancels are always
normalized back to ``Fraction`` so that equality and hashing stay canonical.
"""
from __future__ import annotations

import math
import numbers
from fractions import Fraction
from typing import Union

import sympy

from .errors import ParseError


class GaussianRational:
    """Exact complex number ``real + imag*i`` with rational parts."""

    __slots__ = ("real", "imag")

    def __init__(self, real, imag=0):
        self.real = Fraction(real)
        self.imag = Fraction(imag)

    # arithmetic -----------------------------------------------------------
    @staticmethod
    def _parts(other):
        if isinstance(other, GaussianRational):
            return other.real, other.imag
        if isinstance(other, (int, Fraction)):
            return Fraction(other), Fraction(0)
        return None

    def __add__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return complex(self) + other
            return NotImplemented
        return normalize(GaussianRational(self.real + p[0], self.imag + p[1]))

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.real, -self.imag)

    def __sub__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return complex(self) - other
            return NotImplemented
        return normalize(GaussianRational(self.real - p[0], self.imag - p[1]))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return complex(self) * other
            return NotImplemented
        a, b = self.real, self.imag
        c, d = p
        return normalize(GaussianRational(a * c - b * d, a * d + b * c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return complex(self) / other
            return NotImplemented
        c, d = p
        den = c * c + d * d
        if den == 0:
            raise ZeroDivisionError("division by exact zero")
        a, b = self.real, self.imag
        return normalize(GaussianRational((a * c + b * d) / den, (b * c - a * d) / den))

    def __rtruediv__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return other / complex(self)
            return NotImplemented
        return GaussianRational(*p) / self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return complex(self) ** n
        result: Union[Fraction, GaussianRational] = Fraction(1)
        base = self if n >= 0 else 1 / self
        for _ in range(abs(n)):
            result = result * base
        return result

    # comparison and conversion ---------------------------------------------
    def __eq__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, complex):
                return complex(self) == other
            return NotImplemented
        return self.real == p[0] and self.imag == p[1]

    def __hash__(self):
        if self.imag == 0:
            return hash(self.real)
        return hash((self.real, self.imag))

    def __bool__(self):
        return bool(self.real) or bool(self.imag)

    def __complex__(self):
        return complex(float(self.real), float(self.imag))

    def __abs__(self):
        return math.hypot(float(self.real), float(self.imag))

    def abs2(self) -> Fraction:
        return self.real * self.real + self.imag * self.imag

    def conjugate(self):
        return GaussianRational(self.real, -self.imag)

    def __repr__(self):
        return f"GaussianRational({self.real}, {self.imag})"

    def __str__(self):
        return f"({self.real}{'+' if self.imag >= 0 else '-'}{abs(self.imag)}i)"


Exact = Union[Fraction, GaussianRational]


def normalize(c):
    """Collapse a Gaussian rational with zero imaginary part to a Fraction."""
    if isinstance(c, GaussianRational) and c.imag == 0:
        return c.real
    return c


def parse_rational(text) -> Fraction:
    """Read an int, float or ``"p/q"`` string as an exact Fraction."""
    if isinstance(text, bool):
        raise ParseError(f"boolean is not a coefficient: {text!r}")
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    if isinstance(text, float):
        if not math.isfinite(text):
            raise ParseError(f"non-finite coefficient {text!r}")
        return Fraction(text)
    if isinstance(text, str):
        try:
            return Fraction(text.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"cannot read {text!r} as a rational") from exc
    raise ParseError(f"cannot read {text!r} as a rational")


def to_exact(c):
    """Coerce a scalar to the exact coefficient domain."""
    if isinstance(c, (Fraction, GaussianRational)):
        return normalize(c)
    if isinstance(c, QuadraticSurd):
        return c if c.b else c.a
    if isinstance(c, bool):
        raise TypeError("boolean is not a coefficient")
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c)
    if isinstance(c, complex):
        return normalize(GaussianRational(Fraction(c.real), Fraction(c.imag)))
    if isinstance(c, numbers.Integral):
        return Fraction(int(c))
    if isinstance(c, numbers.Real):
        return Fraction(float(c))
    if isinstance(c, numbers.Complex):
        return to_exact(complex(c))
    raise TypeError(f"unsupported coefficient type {type(c).__name__}")


def to_float(c):
    """Coerce a scalar to the float coefficient domain (float or complex)."""
    if isinstance(c, GaussianRational):
        return complex(c)
    if isinstance(c, QuadraticSurd):
        return float(c)
    if isinstance(c, complex):
        return c if c.imag != 0 else c.real
    if isinstance(c, bool):
        raise TypeError("boolean is not a coefficient")
    if isinstance(c, numbers.Real):
        return float(c)
    if isinstance(c, numbers.Complex):
        z = complex(c)
        return z if z.imag != 0 else z.real
    raise TypeError(f"unsupported coefficient type {type(c).__name__}")


def is_exact_scalar(c) -> bool:
    return isinstance(c, (int, Fraction, GaussianRational, QuadraticSurd)) and not isinstance(c, bool)


def magnitude(c) -> float:
    """|c| as a float."""
    return float(abs(c))


def conj(c):
    return c.conjugate() if hasattr(c, "conjugate") else c


def real_imag(c) -> tuple:
    """Return (re, im) preserving exactness (surds are returned whole as the real part)."""
    if isinstance(c, GaussianRational):
        return c.real, c.imag
    if isinstance(c, complex):
        return c.real, c.imag
    if isinstance(c, (Fraction, QuadraticSurd)):
        return c, Fraction(0)
    return c, 0.0


_ZERO = Fraction(0)


class QuadraticSurd:
    """Exact real number ``a + b sqrt(d)`` with rational ``a, b`` and squarefree ``d > 1``.

    Arithmetic is closed with ``int``/``Fraction`` and with surds over the
    same ``d``; anything else falls back to floats.  A surd whose ``b``
    vanishes is normalized to a ``Fraction``.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a, b, d: int):
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.d = int(d)
        if self.d < 2:
            raise ValueError("radicand must be an integer >= 2")

    def _parts(self, other):
        if isinstance(other, QuadraticSurd):
            if other.d != self.d:
                return None
            return other.a, other.b
        if isinstance(other, Fraction):
            return other, _ZERO
        if isinstance(other, int) and not isinstance(other, bool):
            return Fraction(other), _ZERO
        return None

    def _make(self, a, b):
        if b == 0:
            return a
        out = object.__new__(QuadraticSurd)
        out.a = a
        out.b = b
        out.d = self.d
        return out

    def __add__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return float(self) + other
            return NotImplemented
        return self._make(self.a + p[0], self.b + p[1])

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.a, -self.b)

    def __sub__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return float(self) - other
            return NotImplemented
        return self._make(self.a - p[0], self.b - p[1])

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return float(self) * other
            return NotImplemented
        c, e = p
        return self._make(self.a * c + self.d * self.b * e, self.a * e + self.b * c)

    __rmul__ = __mul__

    def norm(self) -> Fraction:
        """Field norm ``a^2 - d b^2`` (nonzero for nonzero elements)."""
        return self.a * self.a - self.d * self.b * self.b

    def inverse(self):
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("division by exact zero")
        return self._make(self.a / n, -self.b / n)

    def __truediv__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return float(self) / other
            return NotImplemented
        if isinstance(other, QuadraticSurd):
            return self * other.inverse()
        if p[0] == 0:
            raise ZeroDivisionError("division by exact zero")
        return self._make(self.a / p[0], self.b / p[0])

    def __rtruediv__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return other / float(self)
            return NotImplemented
        return self.inverse() * p[0]

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return float(self) ** n
        result = Fraction(1)
        base = self if n >= 0 else self.inverse()
        for _ in range(abs(n)):
            result = result * base
        return result

    def sign(self) -> int:
        """Exact sign of ``a + b sqrt(d)``."""
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sa == sb or sb == 0:
            return sa
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with d b^2
        diff = self.a * self.a - self.d * self.b * self.b
        return sa if diff > 0 else (sb if diff < 0 else 0)

    def _cmp(self, other) -> int:
        diff = self - other
        if isinstance(diff, QuadraticSurd):
            return diff.sign()
        if isinstance(diff, float):
            return (diff > 0) - (diff < 0)
        return (diff > 0) - (diff < 0)

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __eq__(self, other):
        p = self._parts(other)
        if p is None:
            if isinstance(other, (float, complex)):
                return float(self) == other
            return NotImplemented
        return self.a == p[0] and self.b == p[1]

    def __hash__(self):
        return hash((self.a, self.b, self.d))

    def __bool__(self):
        return bool(self.a) or bool(self.b)

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(self.d)

    def __complex__(self):
        return complex(float(self))

    def __abs__(self):
        return -self if self.sign() < 0 else self

    @property
    def real(self):
        return self

    @property
    def imag(self):
        return Fraction(0)

    def conjugate(self):
        """Complex conjugation (a real number is its own conjugate)."""
        return self

    def __repr__(self):
        return f"QuadraticSurd({self.a}, {self.b}, {self.d})"

    def __str__(self):
        return f"({self.a}{'+' if self.b >= 0 else '-'}{abs(self.b)}*sqrt({self.d}))"


def parse_number(text, exact: bool = False):
    """Read a scalar such as ``"3/2"``, ``"sqrt(2)"`` or ``"(1+sqrt(5))/2"``.

    In exact mode rationals become ``Fraction``, elements of a real quadratic
    field ``Q(sqrt d)`` become :class:`QuadraticSurd` and Gaussian rationals
    become :class:`GaussianRational`; other values raise ``ParseError``.
    In float mode the value is evaluated to ``float`` or ``complex``.
    """
    if isinstance(text, (int, float, Fraction)) and not isinstance(text, bool):
        return to_exact(text) if exact else to_float(text)
    try:
        expr = sympy.sympify(str(text).replace("^", "**"), rational=True)
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ParseError(f"cannot read number {text!r}") from exc
    if not expr.is_number:
        raise ParseError(f"{text!r} is not a number")
    if not exact:
        z = complex(expr.evalf(30))
        return z if z.imag else z.real
    return _exact_from_sympy(expr, text)


def _exact_from_sympy(expr, text):
    expr = sympy.nsimplify(sympy.expand(expr))
    if expr.is_Rational:
        return Fraction(int(expr.p), int(expr.q))
    re, im = expr.as_real_imag()
    if im != 0:
        if re.is_Rational and im.is_Rational:
            return GaussianRational(Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q)))
        raise ParseError(f"{text!r} is not exactly representable")
    a, b, d = Fraction(0), Fraction(0), None
    for term in sympy.Add.make_args(sympy.expand(expr)):
        if term.is_Rational:
            a += Fraction(int(term.p), int(term.q))
            continue
        coeff, rest = term.as_coeff_Mul()
        if isinstance(rest, sympy.Pow) and rest.exp == sympy.Rational(1, 2) and rest.base.is_Integer:
            if d is not None and int(rest.base) != d:
                raise ParseError(f"{text!r} mixes different square roots")
            d = int(rest.base)
            b += Fraction(int(coeff.p), int(coeff.q))
            continue
        raise ParseError(f"{text!r} is not in a real quadratic field")
    if d is None or b == 0:
        return a
    return QuadraticSurd(a, b, d)
