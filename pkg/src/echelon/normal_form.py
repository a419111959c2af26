"""Kolmogorov, Newton, Picard and transversal iterations for group actions on jets.

An :class:`ActionProblem` bundles a base point ``a``, the infinitesimal action
``L_u`` of a correction ``u`` on points, and a right inverse ``j`` of
``u -> L_u a``.  The group element ``exp(u)`` acts on points by the Lie series
``sum L_u^k x / k!``.  Points and corrections are series or tuples of series
(vector fields).

The Kolmogorov iteration is

    b_{n+1} = exp(-u_n)(a + b_n) - a,      u_{n+1} = j(b_{n+1}),

and the transversal variant re-bases the inverse at ``a_n = a + alpha_0 + ...``
and moves the part of the residual that cannot be solved into ``alpha_n``.

Two concrete problems are provided: :class:`MorseProblem` (functions with a
nondegenerate quadratic part, acted on by vector fields through composition)
and :class:`SiegelProblem` (vector fields with diagonal linear part, acted on
by Lie brackets).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .divisors import as_frequency, pair
from .errors import (
    ConvergenceError,
    DegenerateError,
    PreconditionError,
    ResonanceError,
    ScaleDomainError,
    SignatureError,
)
from .numbers import magnitude, to_exact, to_float
from .operators import lie_series
from .scales import MAJORANT, ScaleFamily, norm_at
from .series import ORDER_INFINITY, ZERO_TOL, TruncatedSeries, compose, total_degree


# ----------------------------------------------------------------------------------
# points and corrections: a series or a tuple of series
# ----------------------------------------------------------------------------------

def vadd(x, y):
    if isinstance(x, tuple):
        return tuple(p + q for p, q in zip(x, y))
    return x + y


def vsub(x, y):
    if isinstance(x, tuple):
        return tuple(p - q for p, q in zip(x, y))
    return x - y


def vzero(x):
    if isinstance(x, tuple):
        return tuple(p.zero_like() for p in x)
    return x.zero_like()


def vis_zero(x) -> bool:
    if isinstance(x, tuple):
        return all(p.is_zero for p in x)
    return x.is_zero


def vmap(fn: Callable, x):
    if isinstance(x, tuple):
        return tuple(fn(p) for p in x)
    return fn(x)


def vparts(x) -> tuple:
    return x if isinstance(x, tuple) else (x,)


def vorder(x, tol=None, reference=None):
    """Filtration order of a point; for vector fields the minimum over components."""
    return min((p.filtration_order(tol, reference) for p in vparts(x)), default=ORDER_INFINITY)


def vnorm(x, scale: ScaleFamily, s: float) -> float:
    """Norm of a point: sum of component norms for vector fields."""
    return float(sum(norm_at(p, scale, s) for p in vparts(x)))


def vmax_abs(x) -> float:
    return max((p.max_abs() for p in vparts(x)), default=0.0)


# ----------------------------------------------------------------------------------
# schedules and lemma bounds
# ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Scale bookkeeping ``s_{n+1} = s_n - c sigma_n``.

    ``rule="halving"``: ``sigma_n = 0`` for ``n <= k`` and ``s / 2^{n-k+1}``
    afterwards, ``c = 2``, ``s_0 = 2s``.  ``rule="thirds"``: ``sigma_n = 0``
    for ``n <= k + l`` and ``s / 3^{n-k-l}`` afterwards, ``c = 3``,
    ``s_0 = 5s/2``.  ``rule="custom"`` takes explicit ``sigmas``, ``s0`` and
    ``c``.  Explicit ``s0`` or ``c`` override the rule defaults.
    """

    s: float
    rule: str = "halving"
    k: int = 0
    l: int = 0
    sigmas: tuple | None = None
    s0: float | None = None
    c: float | None = None

    def __post_init__(self):
        if not self.s > 0:
            raise ScaleDomainError("schedule base scale must be positive")
        if self.rule not in ("halving", "thirds", "custom"):
            raise PreconditionError(f"unknown schedule rule {self.rule!r}")
        if self.rule == "custom" and self.sigmas is None:
            raise PreconditionError("custom schedule needs explicit sigmas")
        if self.sigmas is not None:
            object.__setattr__(self, "sigmas", tuple(float(v) for v in self.sigmas))

    @property
    def start(self) -> float:
        if self.s0 is not None:
            return self.s0
        return 2.5 * self.s if self.rule == "thirds" else 2 * self.s

    @property
    def factor(self) -> float:
        if self.c is not None:
            return self.c
        return 3.0 if self.rule == "thirds" else 2.0

    def sigma(self, n: int) -> float:
        if self.sigmas is not None:
            return self.sigmas[n] if n < len(self.sigmas) else 0.0
        if self.rule == "thirds":
            lag = self.k + self.l
            return 0.0 if n <= lag else self.s / 3 ** (n - lag)
        return 0.0 if n <= self.k else self.s / 2 ** (n - self.k + 1)

    def values(self, steps: int) -> list:
        """``[(s_n, sigma_n)]`` for ``n = 0..steps``; raises if some ``s_n <= 0``."""
        out = []
        s_n = self.start
        for n in range(steps + 1):
            sig = self.sigma(n)
            if not s_n > 0:
                raise ScaleDomainError(f"schedule reaches s_{n} = {s_n} <= 0")
            out.append((s_n, sig))
            s_n = s_n - self.factor * sig
        return out

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def lemma_applicable(tau: float, s: float, N: float) -> bool:
    """Hypothesis ``3 N / (tau - s) <= 1/2`` of the remainder lemmas."""
    return tau > s and 3 * N / (tau - s) <= 0.5


def residual_bound(C: float, tau: float, s: float, N: float) -> float:
    """``36 C N^2 / (tau - s)^2``: bound for ``|(exp(-u)(Id + u) - Id) a|_s``."""
    if N == 0:
        return 0.0
    if not tau > s:
        return math.inf
    return 36 * C * N * N / (tau - s) ** 2


def companion_bound(C: float, alpha_norm: float, tau: float, s: float, N: float) -> float:
    """``6 C |alpha|_tau N / (tau - s)``: bound for ``|(exp(-u) - Id) alpha|_s``."""
    if N == 0 or alpha_norm == 0:
        return 0.0
    if not tau > s:
        return math.inf
    return 6 * C * alpha_norm * N / (tau - s)


# ----------------------------------------------------------------------------------
# traces
# ----------------------------------------------------------------------------------

@dataclass
class TraceRow:
    """One iteration step: input residual ``b_n``, correction ``u_n``, output ``b_{n+1}``."""

    n: int
    s_n: float
    sigma_n: float
    residual_norm: float
    residual_order: float
    u_bound: float | None = None
    condition_E: bool | None = None
    next_residual_norm: float | None = None
    next_residual_order: float | None = None
    grade: float | None = None
    next_grade: float | None = None
    alpha_norm: float | None = None
    lemma_applicable: bool | None = None
    lemma_measured: float | None = None
    lemma_bound: float | None = None
    companion_measured: float | None = None
    companion_bound: float | None = None

    @property
    def lemma_ok(self) -> bool | None:
        if not self.lemma_applicable:
            return None
        ok = self.lemma_measured <= self.lemma_bound * (1 + 1e-12) + 1e-300
        if self.companion_bound is not None:
            ok = ok and self.companion_measured <= self.companion_bound * (1 + 1e-12) + 1e-300
        return ok


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and (math.isinf(v) or math.isnan(v)):
        return None
    return v


@dataclass
class IterationTrace:
    """Per-step records of one run plus run-level annotations."""

    strategy: str
    rows: list = field(default_factory=list)
    annotations: dict = field(default_factory=dict)

    CSV_COLUMNS = (
        "n", "s_n", "sigma_n", "residual_norm", "u_bound", "residual_order",
        "next_residual_order", "next_residual_norm", "grade", "next_grade", "alpha_norm",
        "condition_E", "lemma_applicable", "lemma_measured", "lemma_bound",
        "companion_measured", "companion_bound", "lemma_ok",
    )

    def __len__(self) -> int:
        return len(self.rows)

    def orders(self) -> list:
        """Residual order after each executed step."""
        return [r.next_residual_order for r in self.rows]

    def grades(self) -> list:
        return [r.next_grade for r in self.rows]

    def lemma_violations(self) -> list:
        return [r.n for r in self.rows if r.lemma_ok is False]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_csv_value(getattr(r, c)) for c in self.CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> dict:
        rows = []
        for r in self.rows:
            d = {f.name: _json_value(getattr(r, f.name)) for f in fields(r)}
            d["lemma_ok"] = r.lemma_ok
            rows.append(d)
        return {"strategy": self.strategy, "annotations": self.annotations, "rows": rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# ----------------------------------------------------------------------------------
# action problems
# ----------------------------------------------------------------------------------

class ActionProblem:
    """Group action on jets around a base point.

    Subclasses provide :meth:`generator`, :meth:`inverse_j`,
    :meth:`correction_bound` and usually :meth:`transform`.  Transversal
    problems also override :meth:`split` and :meth:`project`.

    Attributes
    ----------
    a : series or tuple of series
        Base point.
    scale : ScaleFamily
        Scale used for trace norms.
    j_order : int
        Loss order ``k`` of ``j``.
    newton_ok : bool
        Whether the re-based inverse needed by Newton is available.
    """

    a = None
    scale: ScaleFamily = MAJORANT
    j_order: int = 0
    newton_ok: bool = False
    tol: float = ZERO_TOL

    # action -------------------------------------------------------------------------
    def generator(self, u) -> Callable:
        """The linear map ``x -> L_u x`` (infinitesimal action of ``u``)."""
        raise NotImplementedError

    def act(self, u, x, sign: int = 1):
        """``exp(sign u) . x`` by the Lie series."""
        if vis_zero(u):
            return x
        L = self.generator(u)
        return self.clean(lie_series(lambda y: self.clean(L(y)), x, sign))

    def inverse_j(self, b):
        """Right inverse of ``u -> L_u a``."""
        raise NotImplementedError

    def split(self, b, point):
        """``(u, alpha)`` with ``b = L_u point + alpha`` and ``alpha`` in the transversal.

        The default has a trivial transversal and inverts at ``a``.
        """
        u = self.inverse_j(b)
        return u, self.clean(vsub(b, self.generator(u)(point)))

    def project(self, x):
        """``(F-part, complement)``; trivial transversal by default."""
        return vzero(x), x

    def zero_correction(self):
        raise NotImplementedError

    # bookkeeping --------------------------------------------------------------------
    @property
    def exact(self) -> bool:
        return all(p.exact for p in vparts(self.a))

    def clean(self, x):
        """Drop float noise relative to the problem reference magnitude."""
        if self.exact:
            return x
        ref = getattr(self, "reference", 1.0)
        return vmap(lambda p: p.chop(self.tol, ref), x)

    def norm(self, x, s: float) -> float:
        return vnorm(x, self.scale, s)

    def order(self, x):
        return vorder(x)

    def grade(self, x):
        """Optional secondary grading reported in traces (``None`` by default)."""
        return None

    def action_constant(self, point, tau: float) -> float:
        """``C`` with ``|L_u^n point|_s <= C N^n_{s+sigma}(L_u^n) sigma^{-n}``: ``|point|_tau``."""
        return self.norm(point, tau)

    def correction_bound(self, u, tau: float) -> float:
        """Certified ``N^1_tau`` of ``L_u``."""
        raise NotImplementedError

    def j_bound(self, s: float) -> float | None:
        """Certified ``N^k_s(j)`` or ``None``."""
        return None

    def transform(self, us: Sequence):
        """Coordinate change realizing the composed group element (problem specific)."""
        return None


@dataclass
class GroupElement:
    """``exp(sign u_last) ... exp(sign u_first)`` acting on points of a problem."""

    problem: ActionProblem
    us: tuple
    sign: int = 1

    @property
    def is_identity(self) -> bool:
        return all(vis_zero(u) for u in self.us)

    def apply(self, x):
        for u in self.us:
            x = self.problem.act(u, x, self.sign)
        return x

    __call__ = apply

    def inverse(self) -> "GroupElement":
        return GroupElement(self.problem, tuple(reversed(self.us)), -self.sign)


@dataclass
class IterationResult:
    """Outcome of an iteration run.

    ``element`` maps the input point ``a + b`` to ``a + residual`` (or to
    ``a + alpha_total + residual`` for transversal runs).
    """

    problem: ActionProblem
    element: GroupElement
    trace: IterationTrace
    residual: object
    corrections: tuple
    alpha_total: object = None
    coordinates: object = None

    @property
    def transform(self) -> GroupElement:
        return self.element


def _schedule_for(p: ActionProblem, sched: Schedule | None, rule: str, l: int = 0) -> Schedule:
    if sched is not None:
        return sched
    return Schedule(0.1 * p.scale.S, rule, k=p.j_order, l=l)


def _check_scales(p: ActionProblem, values):
    for s_n, _ in values:
        if not s_n < p.scale.S:
            raise ScaleDomainError(f"schedule scale {s_n} outside (0, {p.scale.S})")


def _star_annotation(p: ActionProblem, sched: Schedule, us, C: float) -> dict:
    """Smallness condition (*) for the Kolmogorov schedule, evaluated on ``u_{k+1}``."""
    k = sched.k
    Nj = p.j_bound(p.scale.S * (1 - 1e-12))
    out = {"k": k, "C": C, "N_j": Nj}
    if Nj is None or not Nj:
        out.update(m=None, star=None)
        return out
    m = min(1.0, 1 / (36 * C * Nj)) if C else 1.0
    out["m"] = m
    if len(us) <= k + 1 or not 2 * sched.s < p.scale.S:
        out["star"] = None
        return out
    lhs = p.correction_bound(us[k + 1], 2 * sched.s)
    rhs = 2.0 ** (-3 * (k + 2)) * m * (sched.s / 8) ** (k + 2)
    out.update(star_lhs=lhs, star_rhs=rhs, star=bool(lhs <= rhs))
    return out


# ----------------------------------------------------------------------------------
# strategies
# ----------------------------------------------------------------------------------

def kolmogorov_iterate(
    p: ActionProblem,
    b,
    steps: int,
    sched: Schedule | None = None,
    *,
    single_sequence: bool = False,
) -> IterationResult:
    """Kolmogorov iteration ``b_{n+1} = exp(-u_n)(a + b_n) - a``, ``u_n = j(b_n)``.

    Parameters
    ----------
    p : ActionProblem
    b : point
        Initial residual.
    steps : int
    sched : Schedule, optional
        Defaults to the halving schedule with ``k = p.j_order``.
    single_sequence : bool
        Recompute every residual from ``a + b`` through the accumulated group
        element instead of from the previous residual.

    Returns
    -------
    IterationResult
        ``element`` is ``exp(-u_last) ... exp(-u_0)``, mapping ``a + b`` to
        ``a + residual``.  Stops early on a zero residual.

    Raises
    ------
    ResonanceError
        From ``j``.
    ExponentialRefusedError
        If a Lie series fails to terminate.
    """
    if steps < 0:
        raise PreconditionError("steps must be >= 0")
    sched = _schedule_for(p, sched, "halving")
    values = sched.values(steps)
    _check_scales(p, values)
    a = p.a
    start = vadd(a, b)
    trace = IterationTrace("kolmogorov", annotations={"schedule": sched.to_json(), "single_sequence": single_sequence})
    us = []
    b_n = p.clean(b)
    for n in range(steps):
        if vis_zero(b_n):
            break
        s_n, sig = values[n]
        u = p.inverse_j(b_n)
        N = p.correction_bound(u, s_n)
        if single_sequence:
            x = start
            for v in us + [u]:
                x = p.act(v, x, -1)
            b_next = p.clean(vsub(x, a))
        else:
            b_next = p.clean(vsub(p.act(u, vadd(a, b_n), -1), a))
        row = TraceRow(
            n, s_n, sig, p.norm(b_n, s_n), p.order(b_n), N, 3 * N < s_n,
            p.norm(b_next, s_n), p.order(b_next), p.grade(b_n), p.grade(b_next),
        )
        if sig > 0:
            tau, s = s_n, s_n - sig
            row.lemma_applicable = lemma_applicable(tau, s, N)
            row.lemma_measured = p.norm(b_next, s)
            row.lemma_bound = residual_bound(p.action_constant(a, tau), tau, s, N)
        trace.rows.append(row)
        us.append(u)
        b_n = b_next
    C = p.action_constant(a, values[0][0])
    trace.annotations["smallness"] = _star_annotation(p, sched, us, C)
    element = GroupElement(p, tuple(us), -1)
    return IterationResult(p, element, trace, b_n, tuple(us), coordinates=p.transform(us))


def dexp_apply(p: ActionProblem, u, delta, x):
    """Derivative of ``v -> exp(v) . x`` at ``u`` in direction ``delta``."""
    Lu, Ld = p.generator(u), p.generator(delta)
    P, D = x, vzero(x)
    total = vzero(x)
    j = 0
    while True:
        j += 1
        D = p.clean(vadd(Lu(D), Ld(P)))
        P = p.clean(Lu(P))
        if vis_zero(D) and vis_zero(P):
            return total
        total = vadd(total, vmap(lambda q: q.scale(Fraction(1, math.factorial(j)) if q.exact else 1 / math.factorial(j)), D))
        if j > 10_000:
            raise ConvergenceError("derivative of the exponential did not terminate")


def dexp_solve(p: ActionProblem, u, r, max_iter: int = 256):
    """Solve ``Dexp_u(delta) . a = r`` by the Neumann series around ``j``.

    Converges at jet level because ``Dexp_u - L_(.) a`` raises the order.
    """
    delta = p.inverse_j(r)
    for it in range(max_iter):
        e = p.clean(vsub(r, dexp_apply(p, u, delta, p.a)))
        if vis_zero(e):
            return delta
        delta = p.clean(vadd(delta, p.inverse_j(e)))
    raise ConvergenceError("re-based inverse did not converge", step=max_iter)


def _fixed_generator_run(p, b, steps, strategy):
    a = p.a
    target = vadd(a, b)
    u = p.zero_correction()
    trace = IterationTrace(strategy)
    b_n = p.clean(b)
    for n in range(steps):
        if vis_zero(b_n):
            break
        r = p.clean(vsub(target, p.act(u, a, 1)))
        delta = dexp_solve(p, u, r) if strategy == "newton" else p.inverse_j(r)
        N = p.correction_bound(delta, p.scale.S * 0.2)
        u = p.clean(vadd(u, delta))
        b_next = p.clean(vsub(p.act(u, target, -1), a))
        trace.rows.append(TraceRow(
            n, math.nan, 0.0, p.norm(b_n, p.scale.S * 0.2), p.order(b_n), N, None,
            p.norm(b_next, p.scale.S * 0.2), p.order(b_next), p.grade(b_n), p.grade(b_next),
        ))
        b_n = b_next
    element = GroupElement(p, (u,), -1)
    return IterationResult(p, element, trace, b_n, (u,), coordinates=p.transform([u]))


def newton_iterate(p: ActionProblem, b, steps: int) -> IterationResult:
    """Newton iteration on a single generator ``u`` with ``exp(u) . a = a + b``.

    Each step solves the linearization at the current ``u`` exactly (re-based
    inverse).  Norms are reported at ``0.2 S``; no schedule is involved.

    Raises
    ------
    PreconditionError
        If the problem does not provide a re-based inverse.
    """
    if not p.newton_ok:
        raise PreconditionError("newton strategy refused: no re-based inverse for this problem")
    return _fixed_generator_run(p, b, steps, "newton")


def picard_iterate(p: ActionProblem, b, steps: int) -> IterationResult:
    """Picard iteration ``u_{n+1} = u_n + j(a + b - exp(u_n) . a)`` with ``j`` fixed at ``a``."""
    return _fixed_generator_run(p, b, steps, "picard")


def transversal_iterate(p: ActionProblem, b, steps: int, sched: Schedule | None = None) -> IterationResult:
    """Transversal iteration.

    ``a_{n+1} = a_n + alpha_n``, ``b_{n+1} = exp(-u_n)(a_n + b_n) - a_{n+1}``
    with ``(u_n, alpha_n) = p.split(b_n, a_n)``, so ``b_n = L_{u_n} a_n + alpha_n``.

    Returns
    -------
    IterationResult
        ``alpha_total = sum alpha_n``; ``element`` maps ``a + b`` to
        ``a + alpha_total + residual``.  Trace rows carry ``|alpha_n|`` and both
        remainder lemma checks (``A`` against ``36 C N^2/sigma^2`` at
        ``s_n - sigma_n``, ``B`` against ``6 |alpha_n| N / sigma`` at
        ``s_n - 2 sigma_n``).
    """
    if steps < 0:
        raise PreconditionError("steps must be >= 0")
    sched = _schedule_for(p, sched, "thirds")
    values = sched.values(steps)
    _check_scales(p, values)
    a_n = p.a
    alpha_total = vzero(p.a)
    trace = IterationTrace("transversal", annotations={"schedule": sched.to_json()})
    us = []
    b_n = p.clean(b)
    alpha_norms = []
    for n in range(steps):
        if vis_zero(b_n):
            break
        s_n, sig = values[n]
        u, alpha = p.split(b_n, a_n)
        N = p.correction_bound(u, s_n)
        L = p.generator(u)
        A = p.clean(vsub(p.act(u, vadd(a_n, L(a_n)), -1), a_n))
        B = p.clean(vsub(p.act(u, alpha, -1), alpha))
        b_next = p.clean(vadd(A, B))
        row = TraceRow(
            n, s_n, sig, p.norm(b_n, s_n), p.order(b_n), N, 3 * N < s_n,
            p.norm(b_next, s_n), p.order(b_next), p.grade(b_n), p.grade(b_next),
            p.norm(alpha, s_n),
        )
        if sig > 0 and s_n - 2 * sig > 0:
            tau = s_n
            row.lemma_applicable = lemma_applicable(tau, tau - sig, N)
            row.lemma_measured = p.norm(A, tau - sig)
            row.lemma_bound = residual_bound(p.action_constant(a_n, tau), tau, tau - sig, N)
            row.companion_measured = p.norm(B, tau - 2 * sig)
            row.companion_bound = companion_bound(1.0, p.norm(alpha, tau - sig), tau - sig, tau - 2 * sig, N)
        trace.rows.append(row)
        alpha_norms.append(row.alpha_norm)
        us.append(u)
        a_n = vadd(a_n, alpha)
        alpha_total = vadd(alpha_total, alpha)
        b_n = b_next
    trace.annotations["alpha_norms"] = alpha_norms
    element = GroupElement(p, tuple(us), -1)
    return IterationResult(p, element, trace, b_n, tuple(us), alpha_total=alpha_total, coordinates=p.transform(us))


# ----------------------------------------------------------------------------------
# linear algebra over exact scalars
# ----------------------------------------------------------------------------------

def solve_linear(M: Sequence[Sequence], exact: bool):
    """Inverse of a square matrix; Gauss-Jordan over the scalar field in exact mode.

    Exact entries may be rationals, Gaussian rationals or quadratic surds,
    which no array library represents, hence the direct elimination.

    Raises
    ------
    DegenerateError
        If the matrix is singular.
    """
    n = len(M)
    if not exact:
        arr = np.array([[complex(to_float(v)) for v in row] for row in M])
        if abs(np.linalg.det(arr)) <= 1e-14 * max(1.0, np.abs(arr).max()) ** n:
            raise DegenerateError("singular quadratic part")
        inv = np.linalg.inv(arr)
        if not inv.imag.any():
            return inv.real.tolist()
        return [[complex(v) for v in row] for row in inv]
    A = [[to_exact(v) for v in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if A[r][col]), None)
        if pivot is None:
            raise DegenerateError("singular quadratic part")
        A[col], A[pivot] = A[pivot], A[col]
        pv = A[col][col]
        A[col] = [to_exact(v / pv) for v in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                f = A[r][col]
                A[r] = [to_exact(x - f * y) for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A]


def determinant(M: Sequence[Sequence], exact: bool):
    """Determinant by elimination over the scalar field (``numpy`` in float mode)."""
    n = len(M)
    if n == 0:
        return Fraction(1) if exact else 1.0
    if not exact:
        d = complex(np.linalg.det(np.array([[complex(to_float(v)) for v in row] for row in M])))
        return d if d.imag else d.real
    A = [[to_exact(v) for v in row] for row in M]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if A[r][col]), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            A[col], A[pivot] = A[pivot], A[col]
            det = -det
        pv = A[col][col]
        det = to_exact(det * pv)
        for r in range(col + 1, n):
            if A[r][col]:
                f = A[r][col] / pv
                A[r] = [to_exact(x - f * y) for x, y in zip(A[r], A[col])]
    return det


def matrix_rank(M: Sequence[Sequence], exact: bool, tol: float = 1e-12) -> int:
    """Rank by exact elimination, or by ``numpy`` with a relative tolerance."""
    if not M:
        return 0
    if not exact:
        arr = np.array([[complex(to_float(v)) for v in row] for row in M])
        return int(np.linalg.matrix_rank(arr, tol=tol * max(1.0, np.abs(arr).max())))
    A = [[to_exact(v) for v in row] for row in M]
    rank, rows, cols = 0, len(A), len(A[0])
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if A[r][col]), None)
        if pivot is None:
            continue
        A[rank], A[pivot] = A[pivot], A[rank]
        for r in range(rank + 1, rows):
            if A[r][col]:
                f = A[r][col] / A[rank][col]
                A[r] = [to_exact(x - f * y) for x, y in zip(A[r], A[rank])]
        rank += 1
    return rank


# ----------------------------------------------------------------------------------
# Morse reduction
# ----------------------------------------------------------------------------------

def split_by_first_variable(b: TruncatedSeries) -> list:
    """``beta_k`` with ``b = sum_k x_k beta_k``; each monomial goes to its first variable.

    Raises
    ------
    PreconditionError
        If ``b`` has a constant term.
    """
    n = b.signature.taylor
    parts = [{} for _ in range(n)]
    for idx, c in b.items():
        k = next((i for i, e in enumerate(idx) if e), None)
        if k is None:
            raise PreconditionError("cannot divide a constant term by the coordinates")
        red = list(idx)
        red[k] -= 1
        parts[k][tuple(red)] = c
    return [b._like(p) for p in parts]


class MorseProblem(ActionProblem):
    """Functions near a nondegenerate critical point acted on by vector fields.

    ``L_u f = sum_i u_i d f/dx_i`` and ``exp(u) . f = f o Phi_u`` with
    ``Phi_u`` the time-one flow.  The base point is the quadratic part
    ``a = x^T S x`` and ``j(b) = (2S)^{-1} beta`` where ``b = sum x_k beta_k``.

    Parameters
    ----------
    f : TruncatedSeries
        Taylor-only jet with ``f(0) = 0``, ``df(0) = 0``.
    scale : ScaleFamily
    """

    newton_ok = True

    def __init__(self, f: TruncatedSeries, scale: ScaleFamily = MAJORANT):
        if f.signature.fourier:
            raise SignatureError("Morse problems use Taylor slots only")
        if f.filtration_order() < 2:
            raise PreconditionError("f must vanish to order 2 at the origin")
        scale.check_signature(f.signature)
        self.f = f
        self.scale = scale
        self.n = n = f.signature.taylor
        a = f.homogeneous_part(2)
        self.a = a
        self.b = f - a
        S = [[0] * n for _ in range(n)]
        for idx, c in a.items():
            nz = [i for i, e in enumerate(idx) if e]
            if len(nz) == 1:
                S[nz[0]][nz[0]] = c
            else:
                i, k = nz
                S[i][k] = S[k][i] = c / 2 if f.exact else to_float(c) / 2
        self.hessian = [[2 * v for v in row] for row in S]
        self.M = solve_linear(self.hessian, f.exact)
        self.reference = max(f.max_abs(), 1.0)

    def zero_correction(self):
        return tuple(self.a.zero_like() for _ in range(self.n))

    def generator(self, u):
        def L(x):
            out = x.zero_like()
            for i, ui in enumerate(u):
                if not ui.is_zero:
                    out = out + ui * x.derive(i)
            return out

        return L

    def inverse_j(self, b):
        beta = split_by_first_variable(b)
        out = []
        for i in range(self.n):
            ui = b.zero_like()
            for k in range(self.n):
                if self.M[i][k] and not beta[k].is_zero:
                    ui = ui + beta[k].scale(self.M[i][k])
            out.append(ui)
        return tuple(out)

    def correction_bound(self, u, tau: float) -> float:
        # |sum u_i d_i f|_s <= sum |u_i|_s |d_i f|_s and |d_i f|_s <= |f|_{s+sigma} / sigma
        return float(sum(_upto(ui, self.scale, tau) for ui in u))

    def j_bound(self, s: float) -> float:
        col = max(sum(magnitude(self.M[i][k]) for i in range(self.n)) for k in range(self.n))
        return col / s

    def transform(self, us):
        """``(psi, phi)``: ``f o psi = a`` and ``a o phi = f`` modulo the cap."""
        coords = [TruncatedSeries.variable(self.f.signature, self.f.cap, i, exact=self.f.exact) for i in range(self.n)]
        psi = []
        phi = []
        for x in coords:
            y = x
            for u in us:
                y = self.act(u, y, -1)
            psi.append(y)
            z = x
            for u in reversed(us):
                z = self.act(u, z, 1)
            phi.append(z)
        return {"psi": tuple(psi), "phi": tuple(phi)}


def _upto(f: TruncatedSeries, scale: ScaleFamily, tau: float) -> float:
    from .operators import _norm_upto

    return _norm_upto(f, scale, tau)


def morse_reduce(
    f: TruncatedSeries,
    steps: int,
    *,
    strategy: str = "kolmogorov",
    sched: Schedule | None = None,
    scale: ScaleFamily = MAJORANT,
    single_sequence: bool = False,
) -> IterationResult:
    """Reduce ``f`` to its quadratic part by a coordinate change.

    Returns
    -------
    IterationResult
        ``coordinates["psi"]`` satisfies ``f o psi = a + residual`` and
        ``coordinates["phi"]`` satisfies ``a o phi = f`` up to the residual.

    Raises
    ------
    DegenerateError
        If the quadratic part is degenerate.
    """
    p = MorseProblem(f, scale)
    return run_strategy(p, p.b, steps, strategy, sched, single_sequence=single_sequence)


def run_strategy(p: ActionProblem, b, steps: int, strategy: str, sched=None, *, single_sequence=False):
    if strategy == "kolmogorov":
        return kolmogorov_iterate(p, b, steps, sched, single_sequence=single_sequence)
    if strategy == "newton":
        return newton_iterate(p, b, steps)
    if strategy == "picard":
        return picard_iterate(p, b, steps)
    raise PreconditionError(f"unknown strategy {strategy!r}")


# ----------------------------------------------------------------------------------
# Siegel linearization
# ----------------------------------------------------------------------------------

def lie_bracket(v: Sequence[TruncatedSeries], w: Sequence[TruncatedSeries]) -> tuple:
    """``[v, w]_i = v . grad w_i - w . grad v_i`` on Taylor vector fields."""
    n = len(v)
    out = []
    for i in range(n):
        c = v[0].zero_like()
        for k in range(n):
            if not v[k].is_zero:
                d = w[i].derive(k)
                if not d.is_zero:
                    c = c + v[k] * d
            if not w[k].is_zero:
                d = v[i].derive(k)
                if not d.is_zero:
                    c = c - w[k] * d
        out.append(c)
    return tuple(out)


def split_linear(v: Sequence[TruncatedSeries], exact: bool):
    """Diagonal linear frequencies of a vector field and its nonlinear part.

    Raises
    ------
    PreconditionError
        On constant terms or a non-diagonal linear part.
    """
    lam = []
    rest = []
    for i, vi in enumerate(v):
        li = 0
        keep = {}
        for idx, c in vi.items():
            d = total_degree(idx)
            if d == 0:
                raise PreconditionError("vector field must vanish at the origin")
            if d == 1:
                k = idx.index(1)
                if k != i:
                    raise PreconditionError("linear part must be diagonal")
                li = c
            else:
                keep[idx] = c
        lam.append(li)
        rest.append(vi._like(keep))
    return tuple(lam), tuple(rest)


class SiegelProblem(ActionProblem):
    """Vector fields ``A + w`` with ``A = sum lambda_i z_i d/dz_i``, acted on by brackets.

    ``L_u w = -[u, w]``, so ``exp(-u) . v = exp(ad_u) v`` is the pull-back of
    ``v`` by the time-one flow of ``u``; ``j`` divides the coefficient of
    ``z^j d/dz_i`` by ``(j, lambda) - lambda_i``.

    Parameters
    ----------
    v : tuple of TruncatedSeries
        Components of the vector field (Taylor-only, one per slot).
    scale : ScaleFamily
    res_tol : float, optional
        Float-mode resonance threshold (default ``1e-12 max |lambda|``).
    """

    newton_ok = True

    def __init__(self, v: Sequence[TruncatedSeries], scale: ScaleFamily = MAJORANT, res_tol: float | None = None):
        v = tuple(v)
        if not v:
            raise PreconditionError("empty vector field")
        sig = v[0].signature
        if sig.fourier or sig.taylor != len(v) or any(c.signature != sig for c in v):
            raise SignatureError("vector field needs one Taylor-only component per slot")
        scale.check_signature(sig)
        cap = min(c.cap for c in v)
        exact = all(c.exact for c in v)
        v = tuple(c.with_cap(cap) if exact else c.to_float().with_cap(cap) for c in v)
        lam, rest = split_linear(v, exact)
        self.lam = as_frequency(lam, exact)
        self.v = v
        self.scale = scale
        self.n = len(v)
        self.cap = cap
        self.res_tol = res_tol if res_tol is not None else (0.0 if exact else 1e-12 * max(magnitude(x) for x in self.lam))
        self.a = tuple(
            TruncatedSeries.monomial(sig, cap, tuple(int(k == i) for k in range(self.n)), self.lam[i], exact=exact)
            for i in range(self.n)
        )
        self.b = rest
        self.reference = max(max(c.max_abs() for c in v), 1.0)
        self._divisors: dict = {}

    def divisor(self, j: tuple, i: int):
        key = (j, i)
        d = self._divisors.get(key)
        if d is None:
            d = pair(self.lam, j) - self.lam[i]
            resonant = (not d) if self.exact else magnitude(d) <= self.res_tol
            if resonant:
                raise ResonanceError(
                    f"resonant Siegel divisor (j,lambda) - lambda_{i + 1} = 0 at j = {j}",
                    witness={"j": list(j), "i": i + 1},
                    divisor=d,
                )
            self._divisors[key] = d
        return d

    def zero_correction(self):
        return tuple(c.zero_like() for c in self.a)

    def generator(self, u):
        return lambda w: lie_bracket(w, u)

    def inverse_j(self, b):
        out = []
        for i, bi in enumerate(b):
            table = {}
            for idx, c in bi.items():
                if total_degree(idx) < 2:
                    raise PreconditionError("residual must vanish to order 2")
                d = self.divisor(idx, i)
                table[idx] = c / d if self.exact else to_float(c) / to_float(d)
            out.append(bi._like(table))
        return tuple(out)

    def correction_bound(self, u, tau: float) -> float:
        # N^1(ad_u) <= sum_k |u_k|_tau + tau max_k sum_i |d_k u_i|_tau
        first = sum(_upto(uk, self.scale, tau) for uk in u)
        second = max(sum(_upto(ui.derive(k), self.scale, tau) for ui in u) for k in range(self.n))
        return float(first + tau * second)

    def j_bound(self, s: float) -> float | None:
        if not self._divisors:
            return None
        return max(1 / magnitude(d) for d in self._divisors.values())

    def transform(self, us):
        """Conjugacy ``h``: ``v o h = Dh . A`` modulo the cap, ``h = z + O(z^2)``."""
        sig = self.a[0].signature
        out = []
        for i in range(self.n):
            y = TruncatedSeries.variable(sig, self.cap, i, exact=self.exact)
            for u in us:
                y = self.clean(lie_series(lambda f, u=u: _derivation(u, f), y, 1))
            out.append(y)
        return {"h": tuple(out)}


def _derivation(u, f: TruncatedSeries) -> TruncatedSeries:
    out = f.zero_like()
    for k, uk in enumerate(u):
        if not uk.is_zero:
            d = f.derive(k)
            if not d.is_zero:
                out = out + uk * d
    return out


def siegel_linearize(
    v: Sequence[TruncatedSeries],
    steps: int,
    *,
    strategy: str = "kolmogorov",
    sched: Schedule | None = None,
    scale: ScaleFamily = MAJORANT,
    res_tol: float | None = None,
    single_sequence: bool = False,
) -> IterationResult:
    """Linearize ``v`` near a fixed point with diagonal linear part.

    The jet cap of ``v`` is the cutoff.  ``coordinates["h"]`` conjugates
    the linear part to ``v``: ``v o h = Dh . A`` modulo the cap.

    Raises
    ------
    ResonanceError
        On a vanishing divisor below the cap; the witness is ``(j, i)``.
    """
    p = SiegelProblem(v, scale, res_tol)
    res = run_strategy(p, p.b, steps, strategy, sched, single_sequence=single_sequence)
    res.trace.annotations["frequency"] = [str(x) for x in p.lam]
    return res


def conjugacy_defect(v: Sequence[TruncatedSeries], h: Sequence[TruncatedSeries], lam) -> tuple:
    """``v o h - Dh . A`` componentwise (zero modulo the cap for a conjugacy)."""
    n = len(v)
    out = []
    for i in range(n):
        lhs = compose(v[i], list(h))
        rhs = lhs.zero_like()
        for k in range(n):
            d = h[i].derive(k)
            if not d.is_zero:
                zk = TruncatedSeries.variable(h[i].signature, h[i].cap, k, exact=h[i].exact)
                rhs = rhs + (zk * d).scale(lam[k])
        out.append(lhs - rhs)
    return tuple(out)
