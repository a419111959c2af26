"""Sparse truncated series over mixed Fourier/Taylor lattices.

A :class:`TruncatedSeries` is a finite table ``{multi-index: coefficient}``
over the lattice ``Z^m x N^p``: the first ``m`` slots are Fourier slots
(``z_j = e^{i theta_j}``, exponents of either sign) and the remaining ``p``
slots are Taylor slots (non-negative exponents).  The total degree of an
index is the sum of the absolute values of its entries, and every stored index
has total degree at most ``cap``.  Optional ``slot_caps`` bound the partial
degree over groups of slots (for instance the action degree and the degree
in a deformation parameter separately).

All operations are jet operations: they are exact modulo the discarded
indices.  For Taylor slots truncation is an ideal, so nothing below the cap
is ever lost.  For Fourier slots it is not (``z * z^{-1} = 1``); callers that
need exactness in Fourier slots choose caps that are never reached.

Examples
--------
>>> from fractions import Fraction
>>> z = TruncatedSeries.variable((0, 1), 4, 0, exact=True)
>>> (1 + z) * (1 - z)
TruncatedSeries((0, 1), cap=4, {(0,): 1, (2,): -1}, exact)
"""
from __future__ import annotations

import json
import math
from fractions import Fraction
from itertools import product as _cartesian
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ParseError, PreconditionError, SignatureError
from .numbers import (
    GaussianRational,
    QuadraticSurd,
    is_exact_scalar,
    magnitude,
    normalize,
    parse_number,
    parse_rational,
    real_imag,
    to_exact,
    to_float,
)

ORDER_INFINITY = math.inf
ZERO_TOL = 1e-13

# products with at least this many term pairs use the vectorized kernel
_NUMPY_PAIR_THRESHOLD = 4096
_CHUNK_PAIRS = 1 << 21


class Signature(NamedTuple):
    """Lattice signature: ``fourier`` slots in Z followed by ``taylor`` slots in N."""

    fourier: int
    taylor: int

    @property
    def size(self) -> int:
        return self.fourier + self.taylor

    @classmethod
    def coerce(cls, value) -> "Signature":
        if isinstance(value, Signature):
            return value
        try:
            m, p = value
            m, p = int(m), int(p)
        except (TypeError, ValueError) as exc:
            raise SignatureError(f"bad signature {value!r}") from exc
        if m < 0 or p < 0 or m + p == 0:
            raise SignatureError(f"bad signature {value!r}")
        return cls(m, p)


def total_degree(idx: Sequence[int]) -> int:
    """Taylor degree plus Fourier sigma-norm of a multi-index."""
    return sum(abs(e) for e in idx)


def _canonical_slot_caps(slot_caps) -> tuple:
    if not slot_caps:
        return ()
    if isinstance(slot_caps, Mapping):
        slot_caps = slot_caps.items()
    merged: dict = {}
    for slots, cap in slot_caps:
        key = tuple(sorted(int(k) for k in slots))
        cap = int(cap)
        merged[key] = min(cap, merged.get(key, cap))
    return tuple(sorted(merged.items()))


def _merge_slot_caps(a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    return _canonical_slot_caps(list(a) + list(b))


class TruncatedSeries:
    """Immutable sparse jet over ``Z^m x N^p``.

    Parameters
    ----------
    signature : (m, p)
        Number of Fourier and Taylor slots.
    cap : int
        Total-degree truncation order.
    coeffs : mapping, optional
        ``{index tuple: coefficient}``.  Indices beyond the caps and zero
        coefficients are dropped.
    exact : bool
        Store coefficients as ``Fraction``, ``GaussianRational`` or
        ``QuadraticSurd`` instead of ``float``/``complex``.
    slot_caps : sequence of (slots, cap), optional
        Extra partial-degree caps; ``slots`` are absolute slot positions.
    """

    __slots__ = ("signature", "cap", "exact", "slot_caps", "_c")

    def __init__(
        self,
        signature,
        cap: int,
        coeffs: Mapping | Iterable | None = None,
        *,
        exact: bool = False,
        slot_caps=None,
    ):
        sig = Signature.coerce(signature)
        if int(cap) != cap or cap < 0:
            raise PreconditionError(f"order cap must be a non-negative integer, got {cap!r}")
        self.signature = sig
        self.cap = int(cap)
        self.exact = bool(exact)
        self.slot_caps = _canonical_slot_caps(slot_caps)
        coerce = to_exact if self.exact else to_float
        table: dict = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else (coeffs or ())
        m, size = sig.fourier, sig.size
        for idx, c in items:
            idx = tuple(int(e) for e in idx)
            if len(idx) != size:
                raise SignatureError(f"index {idx} does not match signature {tuple(sig)}")
            if any(e < 0 for e in idx[m:]):
                raise SignatureError(f"negative Taylor exponent in {idx}")
            if not self._admissible(idx):
                continue
            c = coerce(c)
            if idx in table:
                c = table[idx] + c
            table[idx] = c
        self._c = {k: v for k, v in table.items() if v}

    # construction helpers ---------------------------------------------------
    @classmethod
    def _raw(cls, sig: Signature, cap: int, table: dict, exact: bool, slot_caps: tuple):
        obj = object.__new__(cls)
        obj.signature = sig
        obj.cap = cap
        obj.exact = exact
        obj.slot_caps = slot_caps
        obj._c = table
        return obj

    def _like(self, table: dict, *, cap=None, exact=None, slot_caps=None):
        return TruncatedSeries._raw(
            self.signature,
            self.cap if cap is None else cap,
            table,
            self.exact if exact is None else exact,
            self.slot_caps if slot_caps is None else slot_caps,
        )

    @classmethod
    def zero(cls, signature, cap: int, *, exact: bool = False, slot_caps=None) -> "TruncatedSeries":
        return cls(signature, cap, None, exact=exact, slot_caps=slot_caps)

    @classmethod
    def constant(cls, signature, cap: int, value=1, *, exact: bool = False, slot_caps=None):
        sig = Signature.coerce(signature)
        return cls(sig, cap, {(0,) * sig.size: value}, exact=exact, slot_caps=slot_caps)

    @classmethod
    def monomial(cls, signature, cap: int, idx, value=1, *, exact: bool = False, slot_caps=None):
        return cls(signature, cap, {tuple(idx): value}, exact=exact, slot_caps=slot_caps)

    @classmethod
    def variable(cls, signature, cap: int, slot: int, *, exact: bool = False, slot_caps=None):
        """The coordinate function of ``slot`` (``z_j`` or ``x_k``)."""
        sig = Signature.coerce(signature)
        idx = [0] * sig.size
        idx[slot] = 1
        return cls(sig, cap, {tuple(idx): 1}, exact=exact, slot_caps=slot_caps)

    def zero_like(self) -> "TruncatedSeries":
        return self._like({})

    def one_like(self, value=1) -> "TruncatedSeries":
        return self._like({}) + value

    # basic protocol ---------------------------------------------------------
    @property
    def coeffs(self) -> Mapping:
        """Read-only view of the coefficient table."""
        return MappingProxyType(self._c)

    def items(self):
        return self._c.items()

    def __len__(self) -> int:
        return len(self._c)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self._c)

    def __getitem__(self, idx) -> object:
        c = self._c.get(tuple(idx))
        if c is None:
            return Fraction(0) if self.exact else 0.0
        return c

    def __bool__(self) -> bool:
        return bool(self._c)

    @property
    def is_zero(self) -> bool:
        return not self._c

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v}" for k, v in sorted(self._c.items()))
        mode = "exact" if self.exact else "float"
        return f"TruncatedSeries({tuple(self.signature)}, cap={self.cap}, {{{body}}}, {mode})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (
            self.signature == other.signature
            and self.cap == other.cap
            and self.slot_caps == other.slot_caps
            and self._c == other._c
        )

    def __hash__(self):
        return hash((self.signature, self.cap, self.slot_caps, frozenset(self._c.items())))

    # admissibility ---------------------------------------------------------
    def _admissible(self, idx) -> bool:
        if total_degree(idx) > self.cap:
            return False
        for slots, cap in self.slot_caps:
            if sum(abs(idx[k]) for k in slots) > cap:
                return False
        return True

    def _check(self, other: "TruncatedSeries"):
        if not isinstance(other, TruncatedSeries):
            raise TypeError(f"expected TruncatedSeries, got {type(other).__name__}")
        if other.signature != self.signature:
            raise SignatureError(
                f"signature mismatch: {tuple(self.signature)} vs {tuple(other.signature)}"
            )

    def _joint(self, other: "TruncatedSeries"):
        """Cap, mode and slot caps of a binary result."""
        self._check(other)
        exact = self.exact and other.exact
        return min(self.cap, other.cap), exact, _merge_slot_caps(self.slot_caps, other.slot_caps)

    def _conform(self, cap: int, exact: bool, slot_caps: tuple) -> dict:
        """Coefficient table re-expressed under a (possibly tighter) contract."""
        table = self._c
        if exact != self.exact:
            table = {k: to_float(v) for k, v in table.items()}
        if cap < self.cap or slot_caps != self.slot_caps:
            probe = TruncatedSeries._raw(self.signature, cap, {}, exact, slot_caps)
            table = {k: v for k, v in table.items() if probe._admissible(k)}
        return table

    def _scalar(self, c):
        if is_exact_scalar(c) and self.exact:
            return to_exact(c)
        return to_float(c)

    # ring operations --------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            c = self._scalar(other)
            if self.exact and not is_exact_scalar(other):
                return self.to_float() + c
            table = dict(self._c)
            key = (0,) * self.signature.size
            v = table.get(key, 0) + c
            if v:
                table[key] = v
            else:
                table.pop(key, None)
            return self._like(table)
        cap, exact, slot_caps = self._joint(other)
        table = dict(self._conform(cap, exact, slot_caps))
        for k, v in other._conform(cap, exact, slot_caps).items():
            s = table.get(k)
            s = v if s is None else s + v
            if s:
                table[k] = s
            else:
                table.pop(k, None)
        return TruncatedSeries._raw(self.signature, cap, table, exact, slot_caps)

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -v for k, v in self._c.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, TruncatedSeries):
            return self + (-other)
        return self + (-self._scalar(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "TruncatedSeries":
        """Multiply every coefficient by the scalar ``c``."""
        if self.exact and not is_exact_scalar(c) and not isinstance(c, GaussianRational):
            return self.to_float().scale(c)
        c = self._scalar(c)
        if not c:
            return self._like({})
        out = {}
        for k, v in self._c.items():
            w = v * c
            if w:
                out[k] = w
        return self._like(out)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        cap, exact, slot_caps = self._joint(other)
        a = self._conform(cap, exact, slot_caps)
        b = other._conform(cap, exact, slot_caps)
        if not a or not b:
            return TruncatedSeries._raw(self.signature, cap, {}, exact, slot_caps)
        if len(a) * len(b) >= _NUMPY_PAIR_THRESHOLD:
            kernel = _mul_indexed if exact else _mul_numpy
            table = kernel(a, b, self.signature, cap, slot_caps)
            if table is not None:
                return TruncatedSeries._raw(self.signature, cap, table, exact, slot_caps)
        table = _mul_python(a, b, self.signature, cap, slot_caps)
        return TruncatedSeries._raw(self.signature, cap, table, exact, slot_caps)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, TruncatedSeries):
            raise TypeError("series division is not supported; divide by scalars only")
        if self.exact and is_exact_scalar(c):
            return self.scale(1 / to_exact(c))
        return self.scale(1 / to_float(c))

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        result = self.one_like()
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # structural transforms ---------------------------------------------------
    def with_cap(self, cap: int | None = None, slot_caps=None) -> "TruncatedSeries":
        """Truncate to a lower cap (raising the cap only relabels the jet)."""
        cap = self.cap if cap is None else int(cap)
        slot_caps = self.slot_caps if slot_caps is None else _canonical_slot_caps(slot_caps)
        probe = TruncatedSeries._raw(self.signature, cap, {}, self.exact, slot_caps)
        table = {k: v for k, v in self._c.items() if probe._admissible(k)}
        return TruncatedSeries._raw(self.signature, cap, table, self.exact, slot_caps)

    def select(self, predicate: Callable[[tuple], bool]) -> "TruncatedSeries":
        """Keep the terms whose index satisfies ``predicate``."""
        return self._like({k: v for k, v in self._c.items() if predicate(k)})

    def map_coeffs(self, fn: Callable[[tuple, object], object]) -> "TruncatedSeries":
        """Apply ``fn(index, coefficient)`` termwise; the result keeps the mode."""
        coerce = to_exact if self.exact else to_float
        out = {}
        for k, v in self._c.items():
            w = coerce(fn(k, v))
            if w:
                out[k] = w
        return self._like(out)

    def to_float(self) -> "TruncatedSeries":
        if not self.exact:
            return self
        return self._like({k: to_float(v) for k, v in self._c.items()}, exact=False)

    def to_exact(self) -> "TruncatedSeries":
        if self.exact:
            return self
        return self._like({k: to_exact(v) for k, v in self._c.items()}, exact=True)

    def conjugate(self) -> "TruncatedSeries":
        """Coefficientwise complex conjugation (indices unchanged)."""
        return self._like({k: v.conjugate() for k, v in self._c.items()})

    def reflect(self) -> "TruncatedSeries":
        """The involution ``i -> -i`` on Fourier slots combined with conjugation.

        A series is real on the real torus exactly when it equals its reflection.
        """
        m = self.signature.fourier
        out = {}
        for k, v in self._c.items():
            key = tuple(-e for e in k[:m]) + k[m:]
            out[key] = v.conjugate()
        return self._like(out)

    # calculus ------------------------------------------------------------------
    def derive(self, axis: int) -> "TruncatedSeries":
        """Formal partial derivative along a Taylor slot.

        The result keeps the cap of ``self``; differentiation lowers degrees so
        nothing is lost.
        """
        m, size = self.signature.fourier, self.signature.size
        if not m <= axis < size:
            raise SignatureError(f"axis {axis} is not a Taylor slot of signature {tuple(self.signature)}")
        out = {}
        for k, v in self._c.items():
            e = k[axis]
            if e:
                key = k[:axis] + (e - 1,) + k[axis + 1:]
                out[key] = v * e
        return self._like(out)

    def angular(self, axis: int, unit=1) -> "TruncatedSeries":
        """Angular derivation ``unit * z_j d/dz_j``: multiply each term by ``unit * idx[axis]``.

        On a Fourier slot this is the derivative in the angle variable up to
        the unit factor; on a Taylor slot it is the Euler operator
        ``x_k d/dx_k``.
        """
        if not 0 <= axis < self.signature.size:
            raise SignatureError(f"axis {axis} out of range for signature {tuple(self.signature)}")
        unit = self._scalar(unit)
        out = {}
        for k, v in self._c.items():
            e = k[axis]
            if e:
                out[k] = v * (e * unit)
        return self._like(out)

    def integrate(self, axis: int) -> "TruncatedSeries":
        """Formal antiderivative along a Taylor slot (constant of integration 0)."""
        m, size = self.signature.fourier, self.signature.size
        if not m <= axis < size:
            raise SignatureError(f"axis {axis} is not a Taylor slot")
        out = {}
        for k, v in self._c.items():
            key = k[:axis] + (k[axis] + 1,) + k[axis + 1:]
            if self._admissible(key):
                out[key] = v / (k[axis] + 1) if self.exact else v / (k[axis] + 1.0)
        return self._like(out)

    # filtration -----------------------------------------------------------------
    def max_abs(self) -> float:
        return max((magnitude(v) for v in self._c.values()), default=0.0)

    def _threshold(self, tol, reference) -> float:
        if self.exact:
            return 0.0
        tol = ZERO_TOL if tol is None else tol
        scale = max(self.max_abs(), 0.0 if reference is None else float(reference))
        return tol * scale

    def filtration_order(self, tol: float | None = None, reference: float | None = None):
        """Minimal total degree of a non-negligible coefficient.

        In exact mode every stored coefficient counts.  In float mode
        coefficients with magnitude at most ``tol * max(max|a|, reference)``
        are ignored (``tol`` defaults to ``ZERO_TOL``).  Returns
        ``ORDER_INFINITY`` for the zero series.
        """
        return self.order_in(None, tol=tol, reference=reference)

    def order_in(self, slots: Sequence[int] | None, tol: float | None = None, reference=None):
        """Minimal partial degree over ``slots`` (all slots when ``None``)."""
        thr = self._threshold(tol, reference)
        best = ORDER_INFINITY
        for k, v in self._c.items():
            if thr and magnitude(v) <= thr:
                continue
            d = total_degree(k) if slots is None else sum(abs(k[s]) for s in slots)
            if d < best:
                best = d
        return best

    def chop(self, tol: float | None = None, reference: float | None = None) -> "TruncatedSeries":
        """Drop float coefficients below the relative zero tolerance."""
        thr = self._threshold(tol, reference)
        if not thr:
            return self
        return self._like({k: v for k, v in self._c.items() if magnitude(v) > thr})

    def homogeneous_part(self, degree: int) -> "TruncatedSeries":
        return self.select(lambda k: total_degree(k) == degree)

    def norm_at(self, scale, s: float) -> float:
        """Shorthand for :func:`echelon.scales.norm_at`."""
        from .scales import norm_at

        return norm_at(self, scale, s)

    def distance(self, other: "TruncatedSeries") -> float:
        """Largest coefficient difference (a jet-level sup distance)."""
        return (self - other).max_abs()


# multiplication kernels --------------------------------------------------------

def _mul_python(a: dict, b: dict, sig: Signature, cap: int, slot_caps: tuple) -> dict:
    if len(a) > len(b):
        a, b = b, a
    m = sig.fourier
    out: dict = {}
    bl = sorted(((k, v, sum(k[m:]), total_degree(k[:m])) for k, v in b.items()), key=lambda t: t[2])
    for ka, va in a.items():
        ta = sum(ka[m:])
        room = cap - ta
        fa = ka[:m]
        for kb, vb, tb, _ in bl:
            if tb > room:
                break
            if m:
                f = sum(abs(x + y) for x, y in zip(fa, kb[:m]))
                if f + ta + tb > cap:
                    continue
            key = tuple([x + y for x, y in zip(ka, kb)])
            if slot_caps:
                ok = True
                for slots, scap in slot_caps:
                    if sum(abs(key[s]) for s in slots) > scap:
                        ok = False
                        break
                if not ok:
                    continue
            prev = out.get(key)
            out[key] = va * vb if prev is None else prev + va * vb
    return {k: v for k, v in out.items() if v}


class _PairPlan:
    """Integer encoding of the admissible index pairs of a product."""

    def __init__(self, a: dict, b: dict, sig: Signature, cap: int, slot_caps: tuple):
        d, m = sig.size, sig.fourier
        A = np.array(list(a.keys()), dtype=np.int64).reshape(len(a), d)
        B = np.array(list(b.keys()), dtype=np.int64).reshape(len(b), d)
        amin, bmin = A.min(0), B.min(0)
        self.lo = amin + bmin
        radix = (A.max(0) + B.max(0)) - self.lo + 1
        self.ok = float(np.prod(radix.astype(np.float64))) < 2.0 ** 62
        if not self.ok:
            return
        weights = np.ones(d, dtype=np.int64)
        for k in range(1, d):
            weights[k] = weights[k - 1] * radix[k - 1]
        self.d, self.m, self.cap = d, m, cap
        self.A, self.B = A, B
        self.weights = weights
        self.ka = (A - amin) @ weights
        self.kb = (B - bmin) @ weights
        self.ta = A[:, m:].sum(1)
        self.tb = B[:, m:].sum(1)
        self.additive = []
        self.general = []
        for slots, scap in slot_caps:
            if all(s >= m for s in slots):
                self.additive.append((A[:, list(slots)].sum(1), B[:, list(slots)].sum(1), scap))
            else:
                self.general.append((list(slots), scap))

    def chunks(self):
        """Yield ``(r0, mask, keys)`` row blocks; ``keys`` are the masked codes."""
        A, B, m = self.A, self.B, self.m
        rows = max(1, _CHUNK_PAIRS // max(1, len(B)))
        for r0 in range(0, len(A), rows):
            r1 = min(len(A), r0 + rows)
            deg = self.ta[r0:r1, None] + self.tb[None, :]
            if m:
                deg = deg + np.abs(A[r0:r1, None, :m] + B[None, :, :m]).sum(-1)
            mask = deg <= self.cap
            for xa, xb, scap in self.additive:
                mask &= (xa[r0:r1, None] + xb[None, :]) <= scap
            for slots, scap in self.general:
                mask &= np.abs(A[r0:r1, None, slots] + B[None, :, slots]).sum(-1) <= scap
            if mask.any():
                yield r0, mask, (self.ka[r0:r1, None] + self.kb[None, :])[mask]

    def decode(self, keys) -> list:
        keys = np.asarray(keys, dtype=np.int64)
        digits = np.empty((len(keys), self.d), dtype=np.int64)
        rem = keys.copy()
        for k in range(self.d - 1, -1, -1):
            digits[:, k] = rem // self.weights[k]
            rem = rem - digits[:, k] * self.weights[k]
        return [tuple(row) for row in (digits + self.lo).tolist()]


def _mul_numpy(a: dict, b: dict, sig: Signature, cap: int, slot_caps: tuple):
    """Vectorized product of two float tables; ``None`` if keys would overflow."""
    plan = _PairPlan(a, b, sig, cap, slot_caps)
    if not plan.ok:
        return None
    va = list(a.values())
    vb = list(b.values())
    is_complex = any(isinstance(v, complex) for v in va) or any(isinstance(v, complex) for v in vb)
    dtype = np.complex128 if is_complex else np.float64
    ca = np.array(va, dtype=dtype)
    cb = np.array(vb, dtype=dtype)
    keys_out, vals_out = [], []
    for r0, mask, keys in plan.chunks():
        r1 = r0 + mask.shape[0]
        keys_out.append(keys)
        vals_out.append((ca[r0:r1, None] * cb[None, :])[mask])
        if sum(len(k) for k in keys_out) > 4 * _CHUNK_PAIRS:
            keys_out, vals_out = _reduce(keys_out, vals_out, is_complex)
    if not keys_out:
        return {}
    keys_out, vals_out = _reduce(keys_out, vals_out, is_complex)
    return {k: v for k, v in zip(plan.decode(keys_out[0]), vals_out[0].tolist()) if v}


def _mul_indexed(a: dict, b: dict, sig: Signature, cap: int, slot_caps: tuple):
    """Exact product with vectorized pair selection; ``None`` if keys would overflow."""
    plan = _PairPlan(a, b, sig, cap, slot_caps)
    if not plan.ok:
        return None
    va = list(a.values())
    vb = list(b.values())
    acc: dict = {}
    get = acc.get
    for r0, mask, keys in plan.chunks():
        ia, ib = np.nonzero(mask)
        for i, j, key in zip((ia + r0).tolist(), ib.tolist(), keys.tolist()):
            prev = get(key)
            acc[key] = va[i] * vb[j] if prev is None else prev + va[i] * vb[j]
    items = [(k, v) for k, v in acc.items() if v]
    return dict(zip(plan.decode([k for k, _ in items]), (v for _, v in items)))


def _reduce(keys_out, vals_out, is_complex):
    keys = np.concatenate(keys_out)
    vals = np.concatenate(vals_out)
    uk, inv = np.unique(keys, return_inverse=True)
    if is_complex:
        re = np.bincount(inv, weights=vals.real, minlength=len(uk))
        im = np.bincount(inv, weights=vals.imag, minlength=len(uk))
        summed = re + 1j * im
    else:
        summed = np.bincount(inv, weights=vals, minlength=len(uk))
    return [uk], [summed]


# composition -----------------------------------------------------------------------

def compose(f: TruncatedSeries, subs: Sequence[TruncatedSeries]) -> TruncatedSeries:
    """Substitute series for the Taylor slots of ``f``.

    ``f`` must have only Taylor slots (``m = 0``) and ``len(subs)`` must equal
    its number of slots.  All substitutions share one signature, which is the
    signature of the result.  The jet is exact when every substitution has
    zero constant term.
    """
    if f.signature.fourier != 0:
        raise SignatureError("compose expects a series with Taylor slots only")
    if len(subs) != f.signature.taylor:
        raise SignatureError(f"expected {f.signature.taylor} substitutions, got {len(subs)}")
    if not subs:
        raise SignatureError("nothing to substitute")
    base = subs[0]
    for s in subs[1:]:
        base._check(s)
    cap = min(s.cap for s in subs)
    exact = f.exact and all(s.exact for s in subs)
    subs = [s.with_cap(cap) if exact or not s.exact else s.to_float().with_cap(cap) for s in subs]
    one = subs[0].zero_like() + 1
    if not exact:
        one = one.to_float()
    powers: list[list[TruncatedSeries]] = [[one] for _ in subs]

    def power(slot: int, e: int) -> TruncatedSeries:
        cache = powers[slot]
        while len(cache) <= e:
            cache.append(cache[-1] * subs[slot])
        return cache[e]

    result = one.zero_like()
    for idx, c in sorted(f.items()):
        term = one
        for slot, e in enumerate(idx):
            if e:
                term = term * power(slot, e)
        result = result + term.scale(c)
    return result


def index_box(signature, cap: int, slot_caps=()) -> Iterator[tuple]:
    """Every admissible index of a signature up to the caps (small lattices only)."""
    sig = Signature.coerce(signature)
    ranges = [range(-cap, cap + 1)] * sig.fourier + [range(0, cap + 1)] * sig.taylor
    probe = TruncatedSeries._raw(sig, cap, {}, False, _canonical_slot_caps(slot_caps))
    for idx in _cartesian(*ranges):
        if probe._admissible(idx):
            yield idx


# literal format --------------------------------------------------------------------

def _emit_scalar(x):
    if isinstance(x, QuadraticSurd):
        return f"{x.a}+({x.b})*sqrt({x.d})"
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return float(x)


def to_literal(f: TruncatedSeries) -> dict:
    """JSON-ready literal ``{"signature", "cap", "coeffs": [{"idx", "re", "im"}]}``."""
    rows = []
    for idx in sorted(f._c):
        re, im = real_imag(f._c[idx])
        rows.append({"idx": list(idx), "re": _emit_scalar(re), "im": _emit_scalar(im)})
    out = {"signature": list(f.signature), "cap": f.cap, "coeffs": rows}
    if f.slot_caps:
        out["slot_caps"] = [[list(slots), cap] for slots, cap in f.slot_caps]
    return out


def _literal_is_exact(rows) -> bool:
    for row in rows:
        for key in ("re", "im"):
            v = row.get(key, 0)
            if isinstance(v, float) or isinstance(v, bool):
                return False
    return True


def _parse_part(v):
    if isinstance(v, str) and "sqrt" in v:
        return parse_number(v, exact=True)
    return parse_rational(v)


def from_literal(obj, exact: bool | None = None) -> TruncatedSeries:
    """Parse a series literal (dict or JSON text).

    ``exact=None`` infers the mode: exact when every coefficient is an integer
    or a rational string.
    """
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("series literal must be a JSON object")
    try:
        sig = obj["signature"]
        cap = obj["cap"]
        rows = obj.get("coeffs", [])
    except KeyError as exc:
        raise ParseError(f"series literal missing key {exc}") from exc
    if not isinstance(rows, list) or not isinstance(cap, int) or isinstance(cap, bool):
        raise ParseError("series literal needs an integer cap and a list of coefficients")
    if exact is None:
        exact = _literal_is_exact(rows)
    table: dict = {}
    try:
        signature = Signature.coerce(sig)
    except SignatureError as exc:
        raise ParseError(str(exc)) from exc
    for row in rows:
        if not isinstance(row, dict) or "idx" not in row:
            raise ParseError(f"bad coefficient row {row!r}")
        idx = row["idx"]
        if not isinstance(idx, list) or not all(isinstance(e, int) and not isinstance(e, bool) for e in idx):
            raise ParseError(f"bad index {idx!r}")
        re = _parse_part(row.get("re", 0))
        im = _parse_part(row.get("im", 0))
        if isinstance(re, QuadraticSurd) or isinstance(im, QuadraticSurd):
            if im:
                raise ParseError("complex coefficients with surd parts are not supported")
            c = re if exact else float(re)
        elif exact:
            c = normalize(GaussianRational(re, im))
        else:
            c = complex(float(re), float(im)) if im else float(re)
        key = tuple(idx)
        if key in table:
            raise ParseError(f"duplicate index {idx}")
        table[key] = c
    try:
        return TruncatedSeries(signature, cap, table, exact=exact, slot_caps=obj.get("slot_caps"))
    except SignatureError as exc:
        raise ParseError(str(exc)) from exc
