"""Linear operators on truncated series with (k, tau, N) bound certificates.

A :class:`BoundProfile` ``(k, tau, N)`` asserts

    |u x|_s <= N sigma^{-k} |x|_{s+sigma}   for 0 < s < tau, 0 < sigma <= tau - s.

Operators built from derivations, multiplications, Hadamard multipliers and
diagonal weights carry analytic upper bounds for ``N`` on the weighted
``l^1`` scales (majorant, strip, mixed); anything else falls back to an
empirical sup over probes, which is a lower estimate and is flagged as such.

The module also provides the Lie-series exponential of an operator
(:func:`exp`) and the infinite products ``e^{u_n} ... e^{u_0}``
(:func:`infinite_product`) with their convergence certificates.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import ExponentialRefusedError, ParseError, PreconditionError, SignatureError
from .numbers import magnitude, to_exact, to_float
from .scales import MAJORANT, ScaleFamily, ScaleKind, norm_at
from .series import ORDER_INFINITY, TruncatedSeries, from_literal, index_box, to_literal

EXP_TAIL_TOL = 1e-16
DEFAULT_LAMBDA = 0.5

_L1_KINDS = (ScaleKind.MAJORANT, ScaleKind.STRIP, ScaleKind.MIXED)


# ----------------------------------------------------------------------------------
# bound profiles
# ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundProfile:
    """Certificate ``|u x|_s <= N sigma^{-k} |x|_{s+sigma}`` on ``(0, tau)``.

    ``certified`` is true when ``N`` is a proven upper bound and false when it
    is an empirical lower estimate.
    """

    k: int
    tau: float
    N: float
    certified: bool = True

    def rhs(self, x_norm_outer: float, sigma: float) -> float:
        return self.N * sigma ** (-self.k) * x_norm_outer


def compose_bound(p: BoundProfile, q: BoundProfile) -> BoundProfile:
    """Bound of ``u v`` from bounds of ``u`` and ``v``: ``(k+k', tau, 2^{k+k'} N N')``."""
    k = p.k + q.k
    return BoundProfile(k, min(p.tau, q.tau), 2**k * p.N * q.N, p.certified and q.certified)


def compose_bounds(profiles: Sequence[BoundProfile]) -> BoundProfile:
    """n-fold composition bound ``(sum k_i, tau, n^{sum k_i} prod N_i)``."""
    if not profiles:
        raise PreconditionError("empty composition")
    n = len(profiles)
    k = sum(p.k for p in profiles)
    N = float(n**k)
    for p in profiles:
        N *= p.N
    return BoundProfile(k, min(p.tau for p in profiles), N, all(p.certified for p in profiles))


def gamma_inequality_check(n: int) -> bool:
    """``3^n n! >= n^n`` in exact integer arithmetic."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    return 3**n * math.factorial(n) >= n**n


def weight_loss_sup(k: int, D: float, d: float, tau: float) -> float:
    """``sup`` over ``0 < sigma < tau`` of ``sigma^k (1 - sigma/tau)^D e^{-d sigma}``.

    This is the largest value of ``sigma^k w(s)/w(s+sigma)`` over the scale
    for a weight ``w(s) = s^D e^{d s}``: for fixed ``sigma`` the ratio is
    increasing in ``s``, so the supremum sits at ``s + sigma = tau``.
    """
    if k == 0:
        return 1.0
    if D == 0 and d == 0:
        return tau**k
    if d == 0:
        sig = k * tau / (k + D)
    else:
        b = k + D + d * tau
        sig = (b - math.sqrt(b * b - 4 * d * k * tau)) / (2 * d)
    sig = min(max(sig, 0.0), tau)
    return sig**k * (1 - sig / tau) ** D * math.exp(-d * sig)


def _weight_exponents(idx, m: int, scale: ScaleFamily):
    """(D, d) with weight(s) = s^D e^{d s} for an l^1-type scale."""
    d = sum(abs(e) for e in idx[:m])
    D = sum(idx[m:]) + sum(idx[k] for k in scale.deformation_slots)
    return D, d


def _norm_upto(f: TruncatedSeries, scale: ScaleFamily, tau: float) -> float:
    """``sup_{s < tau} |f|_s``, i.e. the norm formula evaluated at ``tau`` itself."""
    if f.is_zero:
        return 0.0
    if tau < scale.S:
        return norm_at(f, scale, tau)
    keys = np.array(list(f.coeffs.keys()), dtype=np.int64).reshape(len(f), f.signature.size)
    mags = np.array([magnitude(v) for v in f.coeffs.values()])
    w = scale.weights(keys, f.signature.fourier, tau)
    if scale.kind is ScaleKind.HILBERT:
        return float(math.sqrt(np.sum(mags**2 * w)))
    return float(np.sum(mags * w))


# ----------------------------------------------------------------------------------
# operator descriptors
# ----------------------------------------------------------------------------------

class SeriesOperator:
    """Linear, signature-preserving map on truncated series.

    Subclasses implement :meth:`apply`; the remaining hooks describe
    structure used for certificates and exponentials:

    ``diagonal_weight(idx)``
        eigenvalue on the monomial ``e_idx`` if the operator is diagonal;
    ``order_shift()``
        guaranteed increase of the Taylor degree (``None`` if unknown);
    ``analytic_bound(k, tau, scale, signature, cap)``
        a proven ``N`` or ``None``.
    """

    natural_k: int | None = 0
    is_diagonal: bool = False

    def apply(self, x: TruncatedSeries) -> TruncatedSeries:
        raise NotImplementedError

    def __call__(self, x: TruncatedSeries) -> TruncatedSeries:
        return self.apply(x)

    def diagonal_weight(self, idx):
        return None

    def order_shift(self):
        return None

    def analytic_bound(self, k: int, tau: float, scale: ScaleFamily, signature=None, cap=None):
        return None

    def descriptor(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no literal form")

    # algebra -----------------------------------------------------------------------
    def __matmul__(self, other: "SeriesOperator") -> "SeriesOperator":
        return Composite((self, other))

    def __add__(self, other: "SeriesOperator") -> "SeriesOperator":
        return Sum((self, other))

    def __sub__(self, other: "SeriesOperator") -> "SeriesOperator":
        return Sum((self, Scaled(-1, other)))

    def __neg__(self) -> "SeriesOperator":
        return Scaled(-1, self)

    def __mul__(self, c) -> "SeriesOperator":
        if isinstance(c, SeriesOperator):
            return Composite((self, c))
        return Scaled(c, self)

    __rmul__ = __mul__

    def power(self, j: int) -> "SeriesOperator":
        if j == 0:
            return Identity()
        return Composite((self,) * j)


def _diag_bound(op: SeriesOperator, k: int, tau: float, scale: ScaleFamily, indices, m: int) -> float | None:
    """N for a diagonal operator from its eigenvalues on ``indices``.

    The operator norm of a diagonal map between weighted spaces is the largest
    eigenvalue times weight ratio, and :func:`weight_loss_sup` gives the sup of
    that ratio over the scale.
    """
    if scale.kind is ScaleKind.HILBERT and m:
        return None
    best = 0.0
    for idx in indices:
        w = magnitude(op.diagonal_weight(idx))
        if w == 0:
            continue
        if scale.kind is ScaleKind.HILBERT:
            # squared weight s^{sum(2 a_i + 2)}: the norm ratio has exponent sum(a_i + 1)
            D, d = sum(e + 1 for e in idx), 0
        else:
            D, d = _weight_exponents(idx, m, scale)
        best = max(best, w * weight_loss_sup(k, D, d, tau))
    return best


@dataclass(frozen=True, eq=False)
class Identity(SeriesOperator):
    is_diagonal = True

    def apply(self, x):
        return x

    def diagonal_weight(self, idx):
        return 1

    def order_shift(self):
        return 0

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        return tau**k

    def descriptor(self):
        return {"type": "identity"}


@dataclass(frozen=True, eq=False)
class Zero(SeriesOperator):
    is_diagonal = True

    def apply(self, x):
        return x.zero_like()

    def diagonal_weight(self, idx):
        return 0

    def order_shift(self):
        return ORDER_INFINITY

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        return 0.0

    def descriptor(self):
        return {"type": "zero"}


@dataclass(frozen=True, eq=False)
class Derivation(SeriesOperator):
    """``x -> sum_k c_k D_k x`` with ``D_k = d/dx_k`` on Taylor slots and the
    angular derivation ``z_k d/dz_k`` on Fourier slots.

    ``coeffs`` has one entry per slot; ``None`` or a zero series skips the slot.
    """

    coeffs: tuple
    natural_k = 1

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        live = [c for c in coeffs if c is not None]
        if not live:
            raise PreconditionError("derivation needs at least one coefficient series")
        sig = live[0].signature
        for c in live:
            if c.signature != sig:
                raise SignatureError("derivation coefficients must share one signature")
        if len(coeffs) != sig.size:
            raise SignatureError(f"derivation needs {sig.size} coefficients, got {len(coeffs)}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "_sig", sig)
        object.__setattr__(self, "_m", sig.fourier)
        object.__setattr__(self, "is_diagonal", self._diag_params() is not None)

    @property
    def signature(self):
        return self._sig

    def _slots(self):
        for k, c in enumerate(self.coeffs):
            if c is not None and not c.is_zero:
                yield k, c

    def apply(self, x):
        if x.signature != self._sig:
            raise SignatureError("operator and series signatures differ")
        out = x.zero_like()
        for k, c in self._slots():
            dx = x.angular(k) if k < self._m else x.derive(k)
            if not dx.is_zero:
                out = out + c * dx
        return out

    def _diag_params(self):
        mu = {}
        zero = (0,) * self._sig.size
        for k, c in self._slots():
            if len(c) != 1:
                return None
            (idx, v), = c.items()
            if k < self._m:
                if idx != zero:
                    return None
            else:
                unit = tuple(1 if j == k else 0 for j in range(self._sig.size))
                if idx != unit:
                    return None
            mu[k] = v
        return mu

    def diagonal_weight(self, idx):
        mu = self._diag_params()
        if mu is None:
            return None
        return sum((v * idx[k] for k, v in mu.items()), 0)

    def order_shift(self):
        m, size = self._m, self._sig.size
        taylor = range(m, size)
        best = ORDER_INFINITY
        for k, c in self._slots():
            o = c.order_in(taylor) if size > m else 0
            if o is ORDER_INFINITY:
                continue
            shift = o - 1 if k >= m else o
            best = min(best, shift)
        return best

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        if k < 1:
            return None
        bounds = []
        if scale.kind in _L1_KINDS and not any(
            slot in scale.deformation_slots for slot, _ in self._slots()
        ):
            total = sum(_norm_upto(c, scale, tau) for _, c in self._slots())
            bounds.append(total * tau ** (k - 1))
        if self.is_diagonal and cap is not None:
            sig = signature or self._sig
            d = _diag_bound(self, k, tau, scale, index_box(sig, cap), self._m)
            if d is not None:
                bounds.append(d)
        return min(bounds) if bounds else None

    def descriptor(self):
        return {
            "type": "derivation",
            "coeffs": [None if c is None else to_literal(c) for c in self.coeffs],
        }


@dataclass(frozen=True, eq=False)
class Multiplication(SeriesOperator):
    """``x -> g x``."""

    g: TruncatedSeries

    def __post_init__(self):
        object.__setattr__(self, "_m", self.g.signature.fourier)
        zero = (0,) * self.g.signature.size
        object.__setattr__(self, "is_diagonal", all(idx == zero for idx in self.g))

    def apply(self, x):
        return self.g * x

    def diagonal_weight(self, idx):
        if not self.is_diagonal:
            return None
        return self.g[(0,) * len(idx)]

    def order_shift(self):
        sig = self.g.signature
        return self.g.order_in(range(sig.fourier, sig.size)) if sig.taylor else 0

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        if scale.kind not in _L1_KINDS:
            return None
        return _norm_upto(self.g, scale, tau) * tau**k

    def descriptor(self):
        return {"type": "multiplication", "g": to_literal(self.g)}


@dataclass(frozen=True, eq=False)
class HadamardMultiplier(SeriesOperator):
    """``x -> x * g`` coefficientwise (a diagonal operator)."""

    g: TruncatedSeries
    is_diagonal = True

    def __post_init__(self):
        object.__setattr__(self, "_m", self.g.signature.fourier)

    def apply(self, x):
        return hadamard_product(x, self.g)

    def diagonal_weight(self, idx):
        return self.g[idx]

    def order_shift(self):
        return 0

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        return _diag_bound(self, k, tau, scale, list(self.g), self.g.signature.fourier)

    def descriptor(self):
        return {"type": "hadamard", "g": to_literal(self.g)}


# named diagonal rules: name -> factory(params) -> callable(idx)
def _rule_euler(params):
    weights = [to_exact(w) if isinstance(w, (int, Fraction)) else to_float(w) for w in params["weights"]]
    return lambda idx: sum((w * e for w, e in zip(weights, idx)), 0)


def _rule_L(params):
    tau = params["tau"]
    return lambda idx: 1 + sum(abs(e) ** tau for e in idx)


def _rule_table(params):
    table = {tuple(row[0]): complex(row[1], row[2] if len(row) > 2 else 0) for row in params["entries"]}
    return lambda idx: table.get(tuple(idx), 0)


DIAGONAL_RULES: dict[str, Callable] = {"euler": _rule_euler, "L": _rule_L, "table": _rule_table}


@dataclass(frozen=True, eq=False)
class DiagonalWeight(SeriesOperator):
    """``e_idx -> rule(idx) e_idx`` for a named rule.

    Rules: ``{"name": "euler", "weights": [w_1, ...]}`` gives ``sum w_j idx_j``;
    ``{"name": "L", "tau": t}`` gives ``1 + sum |idx_j|^t``;
    ``{"name": "table", "entries": [[idx, re, im], ...]}`` lists eigenvalues.
    """

    rule: dict
    is_diagonal = True

    def __post_init__(self):
        name = self.rule.get("name")
        if name not in DIAGONAL_RULES:
            raise PreconditionError(f"unknown diagonal rule {name!r}")
        object.__setattr__(self, "_fn", DIAGONAL_RULES[name](self.rule))

    def apply(self, x):
        return x.map_coeffs(lambda idx, c: c * self._fn(idx))

    def diagonal_weight(self, idx):
        return self._fn(idx)

    def order_shift(self):
        return 0

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        if signature is None or cap is None:
            return None
        return _diag_bound(self, k, tau, scale, index_box(signature, cap), tuple(signature)[0])

    def descriptor(self):
        return {"type": "diag", "rule": dict(self.rule)}


@dataclass(frozen=True, eq=False)
class Composite(SeriesOperator):
    """``ops[0] o ops[1] o ... o ops[-1]`` (the last operator acts first)."""

    ops: tuple

    def __post_init__(self):
        flat = []
        for op in self.ops:
            if isinstance(op, Composite):
                flat.extend(op.ops)
            elif not isinstance(op, Identity):
                flat.append(op)
        object.__setattr__(self, "ops", tuple(flat))
        object.__setattr__(self, "is_diagonal", all(op.is_diagonal for op in flat))
        ks = [op.natural_k for op in flat]
        object.__setattr__(self, "natural_k", None if None in ks else sum(ks))

    def apply(self, x):
        for op in reversed(self.ops):
            x = op.apply(x)
        return x

    def diagonal_weight(self, idx):
        if not self.is_diagonal:
            return None
        w = 1
        for op in self.ops:
            w = w * op.diagonal_weight(idx)
        return w

    def order_shift(self):
        total = 0
        for op in self.ops:
            s = op.order_shift()
            if s is None:
                return None
            total += s
        return total

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        if not self.ops:
            return tau**k
        profiles = []
        for op in self.ops:
            kk = op.natural_k
            if kk is None:
                return None
            N = op.analytic_bound(kk, tau, scale, signature, cap)
            if N is None:
                return None
            profiles.append(BoundProfile(kk, tau, N))
        p = compose_bounds(profiles)
        if k < p.k:
            return None
        return p.N * tau ** (k - p.k)

    def descriptor(self):
        return {"type": "composite", "ops": [op.descriptor() for op in self.ops]}


@dataclass(frozen=True, eq=False)
class Sum(SeriesOperator):
    ops: tuple

    def __post_init__(self):
        flat = []
        for op in self.ops:
            flat.extend(op.ops if isinstance(op, Sum) else (op,))
        object.__setattr__(self, "ops", tuple(flat))
        object.__setattr__(self, "is_diagonal", all(op.is_diagonal for op in flat))
        ks = [op.natural_k for op in flat]
        object.__setattr__(self, "natural_k", None if None in ks else max(ks))

    def apply(self, x):
        out = x.zero_like()
        for op in self.ops:
            out = out + op.apply(x)
        return out

    def diagonal_weight(self, idx):
        if not self.is_diagonal:
            return None
        return sum((op.diagonal_weight(idx) for op in self.ops), 0)

    def order_shift(self):
        shifts = [op.order_shift() for op in self.ops]
        if None in shifts:
            return None
        return min(shifts)

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        total = 0.0
        for op in self.ops:
            kk = op.natural_k
            if kk is None or kk > k:
                return None
            N = op.analytic_bound(kk, tau, scale, signature, cap)
            if N is None:
                return None
            total += N * tau ** (k - kk)
        return total

    def descriptor(self):
        return {"type": "sum", "ops": [op.descriptor() for op in self.ops]}


@dataclass(frozen=True, eq=False)
class Scaled(SeriesOperator):
    c: object
    op: SeriesOperator

    def __post_init__(self):
        object.__setattr__(self, "is_diagonal", self.op.is_diagonal)
        object.__setattr__(self, "natural_k", self.op.natural_k)

    def apply(self, x):
        return self.op.apply(x).scale(self.c)

    def diagonal_weight(self, idx):
        w = self.op.diagonal_weight(idx)
        return None if w is None else self.c * w

    def order_shift(self):
        return ORDER_INFINITY if not self.c else self.op.order_shift()

    def analytic_bound(self, k, tau, scale, signature=None, cap=None):
        N = self.op.analytic_bound(k, tau, scale, signature, cap)
        return None if N is None else magnitude(self.c) * N

    def descriptor(self):
        re, im = (self.c.real, self.c.imag) if isinstance(self.c, complex) else (self.c, 0)
        return {"type": "scaled", "re": float(re), "im": float(im), "op": self.op.descriptor()}


def hadamard_product(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    """Coefficientwise product ``sum a_i b_i e_i`` (signatures must agree)."""
    f._check(g)
    exact = f.exact and g.exact
    out = {}
    small, big = (f, g) if len(f) <= len(g) else (g, f)
    for idx, a in small.items():
        b = big.coeffs.get(idx)
        if b is not None:
            v = a * b
            if not exact:
                v = to_float(v)
            if v:
                out[idx] = v
    base = f if f.cap <= g.cap else g
    res = TruncatedSeries._raw(f.signature, min(f.cap, g.cap), out, exact, base.slot_caps)
    return res


# ----------------------------------------------------------------------------------
# certificates
# ----------------------------------------------------------------------------------

def random_probes(signature, cap: int, count: int = 16, seed: int = 0, exact: bool = False, density: float = 0.5):
    """Seeded random probe series with coefficients in the unit square."""
    rng = np.random.default_rng(seed)
    indices = list(index_box(signature, cap))
    probes = []
    for _ in range(count):
        table = {}
        for idx in indices:
            if rng.random() < density:
                table[idx] = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if exact:
            table = {k: Fraction(round(v.real * 64), 64) for k, v in table.items()}
        probes.append(TruncatedSeries(signature, cap, table, exact=exact))
    return probes


def _grid(tau: float, scale: ScaleFamily, points: int = 8):
    top = min(tau, scale.S * (1 - 1e-12))
    out = []
    for a in np.linspace(0.05, 0.95, points):
        s = a * top
        for b in np.linspace(0.1, 1.0, 5):
            sigma = b * (top - s)
            if sigma > 0:
                out.append((float(s), float(sigma)))
    return out


def estimate_bound(
    u: SeriesOperator,
    k: int,
    tau: float,
    scale: ScaleFamily = MAJORANT,
    probes: Sequence[TruncatedSeries] | None = None,
    *,
    grid: Sequence[tuple] | None = None,
    signature=None,
    cap: int | None = None,
    seed: int = 0,
    empirical: bool = False,
) -> BoundProfile:
    """Bound profile ``(k, tau, N)`` for ``u``.

    An analytic upper bound is returned (``certified=True``) when the operator
    structure allows one on ``scale``.  Otherwise, or when ``empirical`` is
    set, ``N`` is the sup of ``|u x|_s sigma^k / |x|_{s+sigma}`` over the
    probes and the ``(s, sigma)`` grid (``certified=False``).

    Raises
    ------
    PreconditionError
        If no probe has a nonzero norm.
    """
    if not 0 < tau <= scale.S:
        raise PreconditionError(f"tau={tau} outside (0, S]")
    if probes:
        signature = signature or probes[0].signature
        cap = cap if cap is not None else max(p.cap for p in probes)
    if not empirical:
        N = u.analytic_bound(k, tau, scale, signature, cap)
        if N is not None:
            return BoundProfile(k, tau, float(N), True)
    if not probes:
        if signature is None or cap is None:
            raise PreconditionError("empirical estimate needs probes or a signature and cap")
        probes = random_probes(signature, cap, seed=seed)
    grid = grid or _grid(tau, scale)
    best = 0.0
    live = 0
    for x in probes:
        ux = u.apply(x)
        for s, sigma in grid:
            outer = norm_at(x, scale, s + sigma)
            if outer == 0:
                continue
            live += 1
            best = max(best, norm_at(ux, scale, s) * sigma**k / outer)
    if live == 0:
        raise PreconditionError("every probe has zero norm")
    return BoundProfile(k, tau, best, False)


def check_condition_E(u: SeriesOperator, profile: BoundProfile | None, s: float, scale: ScaleFamily = MAJORANT,
                      signature=None, cap=None) -> bool:
    """Condition (E): ``3 N^1_s(u) < s``.

    ``profile`` must be a 1-bound valid at least up to ``s`` (its ``N``
    dominates ``N^1_s``); when omitted an analytic profile at ``tau = s`` is
    computed.
    """
    if profile is None:
        profile = estimate_bound(u, 1, s, scale, signature=signature, cap=cap)
    if profile.k != 1:
        raise PreconditionError("condition (E) needs a 1-bound profile")
    if profile.tau < s:
        raise PreconditionError(f"profile valid up to {profile.tau} < s={s}")
    return 3 * profile.N < s


# ----------------------------------------------------------------------------------
# exponentials
# ----------------------------------------------------------------------------------

def lie_series(apply: Callable, x, sign: int = 1, max_terms: int = 10_000):
    """``sum_j sign^j apply^j(x) / j!`` stopping at the first vanishing term.

    ``x`` is a series or a tuple of series (vector fields); ``apply`` maps
    such objects to the same kind.  Termination is the caller's business
    (``apply`` raises a filtration order); running out of ``max_terms``
    raises :class:`ExponentialRefusedError`.
    """
    is_tuple = isinstance(x, tuple)
    total = list(x) if is_tuple else [x]
    term = x
    for j in range(1, max_terms + 1):
        term = apply(term)
        parts = list(term) if is_tuple else [term]
        if all(p.is_zero for p in parts):
            return tuple(total) if is_tuple else total[0]
        parts = [p.scale(Fraction(sign, j)) if p.exact else p.scale(sign / j) for p in parts]
        term = tuple(parts) if is_tuple else parts[0]
        total = [t + p for t, p in zip(total, parts)]
    raise ExponentialRefusedError(f"Lie series did not terminate within {max_terms} terms")


@dataclass(frozen=True, eq=False)
class ExpOperator(SeriesOperator):
    """``exp(sign * u)`` evaluated on jets.

    ``mode`` is one of ``"diagonal"`` (closed form on eigenvalues),
    ``"finite"`` (``u`` raises the Taylor degree, so the Lie series ends),
    ``"tail"`` (condition (E) holds; ``terms`` chosen from the geometric tail
    bound) or ``"refused"``.
    """

    u: SeriesOperator
    sign: int = 1
    mode: str = "finite"
    terms: int | None = None
    rho: float | None = None
    reason: str = ""
    natural_k = None

    def apply(self, x):
        if self.mode == "refused":
            raise ExponentialRefusedError(self.reason or "exponential refused")
        if self.mode == "diagonal":
            if x.is_zero:
                return x
            weights = {idx: self.u.diagonal_weight(idx) for idx in x}
            if all(not w for w in weights.values()):
                return x
            out = x.to_float()
            return out.map_coeffs(lambda idx, c: c * _exp_scalar(self.sign * weights[idx]))
        if self.mode == "finite":
            return lie_series(self.u.apply, x, self.sign)
        total = x
        term = x
        for j in range(1, (self.terms or 0) + 1):
            term = self.u.apply(term).scale(Fraction(self.sign, j) if x.exact else self.sign / j)
            if term.is_zero:
                break
            total = total + term
        return total

    def inverse(self) -> "ExpOperator":
        return ExpOperator(self.u, -self.sign, self.mode, self.terms, self.rho, self.reason)

    def descriptor(self):
        return {"type": "exp", "sign": self.sign, "op": self.u.descriptor()}


def _exp_scalar(w):
    w = to_float(w)
    if isinstance(w, complex):
        z = cmath.exp(w)
        return z if z.imag else z.real
    return math.exp(w)


def exp(
    u: SeriesOperator,
    profile: BoundProfile | None = None,
    *,
    s: float | None = None,
    tol: float = EXP_TAIL_TOL,
    lam: float = DEFAULT_LAMBDA,
    override_terms: int | None = None,
    sign: int = 1,
) -> SeriesOperator:
    """Lie-series exponential ``exp(u)`` as a jet operator.

    Parameters
    ----------
    u : SeriesOperator
    profile : BoundProfile, optional
        A 1-bound for ``u``; needed only when ``u`` is neither diagonal nor
        order raising.
    s : float, optional
        Scale at which condition (E) is checked (default ``profile.tau``).
    tol : float
        Relative tail tolerance for the condition (E) branch.
    lam : float
        The shrink factor: the tail is estimated from ``|.|_s`` into
        ``|.|_{lam s}``.
    override_terms : int, optional
        Force a fixed truncation even when condition (E) fails.
    sign : {1, -1}

    Returns
    -------
    SeriesOperator
        ``Identity`` for the zero operator, otherwise an :class:`ExpOperator`
        whose evaluation raises :class:`ExponentialRefusedError` if no branch
        applies.
    """
    if isinstance(u, Zero) or (isinstance(u, Scaled) and not u.c):
        return Identity()
    if override_terms is not None:
        return ExpOperator(u, sign, "tail", int(override_terms), None, "override")
    if u.is_diagonal:
        return ExpOperator(u, sign, "diagonal")
    shift = u.order_shift()
    if shift is not None and shift >= 1:
        return ExpOperator(u, sign, "finite")
    if profile is None:
        return ExpOperator(u, sign, "refused", reason="no bound profile and u does not raise order")
    if profile.k != 1:
        raise PreconditionError("exp needs a 1-bound profile")
    s = profile.tau if s is None else s
    N = profile.N
    if not 3 * N < s:
        return ExpOperator(
            u, sign, "refused",
            reason=f"condition (E) fails: 3N={3 * N:g} >= s={s:g} and u does not raise order",
        )
    lam = min(lam, (1 - 3 * N / s) / 2) if N else lam
    rho = 3 * N / ((1 - lam) * s)
    if rho == 0:
        return ExpOperator(u, sign, "tail", 1, 0.0)
    J = 0
    while rho ** (J + 1) / (1 - rho) > tol:
        J += 1
        if J > 100_000:
            return ExpOperator(u, sign, "refused", reason="tail bound converges too slowly")
    return ExpOperator(u, sign, "tail", J, rho)


# ----------------------------------------------------------------------------------
# infinite products
# ----------------------------------------------------------------------------------

@dataclass
class ConvergenceCert:
    """Summability record of ``sum N^1_s(u_n)/s``."""

    s: float
    bounds: list
    partial_sums: list
    verdict: str
    tail_bound: float | None = None
    precondition_failed_at: int | None = None
    rule: str = "ratio"

    def rows(self) -> list[dict]:
        return [
            {"n": n, "N1": N, "partial_sum": p, "verdict": self.verdict}
            for n, (N, p) in enumerate(zip(self.bounds, self.partial_sums))
        ]

    @property
    def converged(self) -> bool:
        return self.verdict == "Converged"


def summability_verdict(terms: Sequence[float], rule: str = "ratio") -> tuple[str, float | None]:
    """Classify a finite run of nonnegative terms.

    ``"ratio"``: Diverged when the terms decay no faster than ``1/n``
    (log-log slope at least -1 over the second half); Converged with the
    geometric tail bound when the consecutive ratios over the second half
    stay below one and do not drift upwards; Undetermined otherwise.
    """
    if rule != "ratio":
        raise PreconditionError(f"unknown tail rule {rule!r}")
    terms = [float(t) for t in terms]
    if not terms or all(t == 0 for t in terms):
        return "Converged", 0.0
    half = len(terms) // 2
    tail = terms[half:]
    if tail and all(t == 0 for t in tail):
        return "Converged", 0.0
    pts = [(math.log(n + 1), math.log(t)) for n, t in enumerate(terms) if n >= half and t > 0]
    if len(pts) >= 3:
        xs, ys = zip(*pts)
        slope = float(np.polyfit(xs, ys, 1)[0])
        if slope >= -1 - 1e-6:
            return "Diverged", None
    ratios = [b / a for a, b in zip(tail, tail[1:]) if a > 0]
    if len(ratios) >= 2:
        rho = max(ratios)
        if rho < 1 - 1e-9 and ratios[-1] <= ratios[0] * (1 + 1e-9):
            return "Converged", tail[-1] * rho / (1 - rho)
    return "Undetermined", None


def product_constant(bounds: Sequence[float], s: float, lam: float = DEFAULT_LAMBDA) -> float:
    """``prod 1/(1 - 3 N_i/((1-lam) s))``, the uniform bound on partial products."""
    c = 1.0
    for N in bounds:
        q = 3 * N / ((1 - lam) * s)
        if q >= 1:
            return math.inf
        c /= 1 - q
    return c


def telescoping_constant(bounds: Sequence[float], s: float, lam: float = DEFAULT_LAMBDA, mu: float = DEFAULT_LAMBDA) -> float:
    """Constant ``K`` with ``||g_{n+p} - g_n|| <= K sum_{i=1}^{p} N_i/(lam s)``.

    ``||.||`` is the operator norm from ``|.|_s`` to ``|.|_{lam mu s}``;
    ``K = sup_i 3 C_lam / (1 - mu - 3 N_i/(lam s))``.
    """
    C = product_constant(bounds, s, lam)
    worst = 0.0
    for N in bounds:
        q = 1 - mu - 3 * N / (lam * s)
        if q <= 0:
            return math.inf
        worst = max(worst, 3 * C / q)
    return worst


@dataclass
class ProductResult:
    g: SeriesOperator
    h: SeriesOperator
    cert: ConvergenceCert
    partial: list = field(default_factory=list)


def infinite_product(
    us: Sequence[SeriesOperator],
    s: float,
    profiles: Sequence[BoundProfile] | None = None,
    *,
    scale: ScaleFamily = MAJORANT,
    signature=None,
    cap: int | None = None,
    tail_rule: str = "ratio",
) -> ProductResult:
    """Partial products ``g_n = e^{u_n} ... e^{u_0}`` and inverses ``h_n``.

    Returns the final ``g_n``, ``h_n = e^{-u_0} ... e^{-u_n}``, the list of
    all partial products, and a :class:`ConvergenceCert` built from the
    1-bounds ``N^1_s(u_n)``.  If condition (E) fails at some ``n`` the verdict
    is ``"Diverged"`` with ``precondition_failed_at = n`` and the product stops
    there.
    """
    us = list(us)
    if profiles is None:
        profiles = [estimate_bound(u, 1, s, scale, signature=signature, cap=cap) for u in us]
    bounds, partial_sums, partial = [], [], []
    g: SeriesOperator = Identity()
    h: SeriesOperator = Identity()
    acc = 0.0
    failed = None
    for n, (u, p) in enumerate(zip(us, profiles)):
        if not check_condition_E(u, p, s):
            failed = n
            break
        bounds.append(p.N)
        acc += p.N / s
        partial_sums.append(acc)
        e = exp(u, p, s=s)
        g = Composite((e, g))
        h = Composite((h, exp(u, p, s=s, sign=-1)))
        partial.append(g)
    if failed is not None:
        cert = ConvergenceCert(s, bounds, partial_sums, "Diverged", None, failed, tail_rule)
    else:
        verdict, tail = summability_verdict([N / s for N in bounds], tail_rule)
        cert = ConvergenceCert(s, bounds, partial_sums, verdict, tail, None, tail_rule)
    return ProductResult(g, h, cert, partial)


def operator_norm(op: Callable, signature, cap: int, scale: ScaleFamily, s_in: float, s_out: float, slot_caps=()) -> float:
    """Exact norm of a linear jet map from ``|.|_{s_in}`` to ``|.|_{s_out}``.

    For the weighted ``l^1`` scales the operator norm is the largest column
    ratio ``|A e_a|_{s_out} / |e_a|_{s_in}`` over the monomial basis.
    """
    if scale.kind not in _L1_KINDS:
        raise PreconditionError("exact operator norms are implemented for l^1 scales only")
    best = 0.0
    for idx in index_box(signature, cap, slot_caps):
        e = TruncatedSeries(signature, cap, {idx: 1}, slot_caps=slot_caps)
        img = op(e)
        if img.is_zero:
            continue
        best = max(best, norm_at(img, scale, s_out) / norm_at(e, scale, s_in))
    return best


def derivation_sequence(ratios: Sequence[float], s: float, cap: int, scale: ScaleFamily = MAJORANT) -> list:
    """``u_n = r_n s z^2 d/dz / N`` with ``N`` the analytic 1-bound of ``z^2 d/dz``.

    Each ``u_n`` then has ``N^1_s(u_n) = r_n s``; returns ``[(u_n, profile_n)]``.
    """
    z2 = TruncatedSeries((0, 1), cap, {(2,): 1})
    base = Derivation((z2,))
    N = float(base.analytic_bound(1, s, scale))
    out = []
    for r in ratios:
        u = Derivation((z2.scale(r * s / N),))
        out.append((u, BoundProfile(1, s, r * s, True)))
    return out


def telescoping_report(res: ProductResult, s: float, cap: int, scale: ScaleFamily = MAJORANT,
                       lam: float = DEFAULT_LAMBDA, mu: float = DEFAULT_LAMBDA) -> list:
    """Measured ``||g_m - g_n||`` against ``K sum_{i=n+1}^{m} N_i/(lam s)``.

    Norms are exact jet operator norms from ``|.|_s`` to ``|.|_{lam mu s}``.
    Returns rows ``{"n", "m", "measured", "bound", "ok"}`` for consecutive
    pairs and for ``(0, last)``.
    """
    K = telescoping_constant(res.cert.bounds, s, lam, mu)
    sig = (0, 1)
    gs = [Identity()] + list(res.partial)
    pairs = [(n, n + 1) for n in range(len(gs) - 1)]
    if len(gs) > 2:
        pairs.append((0, len(gs) - 1))
    rows = []
    for n, m in pairs:
        measured = operator_norm(lambda x, a=gs[m], b=gs[n]: a(x) - b(x), sig, cap, scale, s, lam * mu * s)
        bound = K * sum(res.cert.bounds[n:m]) / (lam * s)
        rows.append({"n": n, "m": m, "measured": measured, "bound": bound, "ok": measured <= bound * (1 + 1e-12)})
    return rows


# ----------------------------------------------------------------------------------
# literal form
# ----------------------------------------------------------------------------------

def operator_from_descriptor(obj: dict, exact: bool | None = None) -> SeriesOperator:
    """Parse an operator descriptor (see :meth:`SeriesOperator.descriptor`)."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ParseError("operator descriptor must be an object with a 'type'")
    kind = obj["type"]
    try:
        if kind == "identity":
            return Identity()
        if kind == "zero":
            return Zero()
        if kind == "derivation":
            return Derivation(tuple(None if c is None else from_literal(c, exact) for c in obj["coeffs"]))
        if kind == "hadamard":
            return HadamardMultiplier(from_literal(obj["g"], exact))
        if kind == "multiplication":
            return Multiplication(from_literal(obj["g"], exact))
        if kind == "diag":
            return DiagonalWeight(dict(obj["rule"]))
        if kind == "composite":
            return Composite(tuple(operator_from_descriptor(o, exact) for o in obj["ops"]))
        if kind == "sum":
            return Sum(tuple(operator_from_descriptor(o, exact) for o in obj["ops"]))
        if kind == "scaled":
            c = complex(obj.get("re", 0), obj.get("im", 0))
            return Scaled(c if c.imag else c.real, operator_from_descriptor(obj["op"], exact))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad {kind} descriptor: {exc}") from exc
    except PreconditionError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown operator type {kind!r}")
