"""Hamiltonian normal forms: invariant tori with a formal parameter and the singular case.

Torus layout
------------
A torus Hamiltonian on ``n`` degrees of freedom is a :class:`TruncatedSeries`
with signature ``(n, n + 1)``: Fourier slots ``0..n-1`` for ``z_j = e^{i theta_j}``,
Taylor slots ``n..2n-1`` for the actions ``xi_j`` and slot ``2n`` for the
deformation parameter ``t``.  Separate partial caps bound the Fourier degree,
the action degree and the ``t`` degree.

Bracket convention
------------------
Angles enter through the angular derivation ``D_j = z_j d/dz_j`` with unit 1:

    {f, h} = sum_j (D_j f  d h/d xi_j  -  d f/d xi_j  D_j h),

so ``{e_i, lambda . xi} = (lambda, i) e_i`` and ``{h, lambda . xi} = r`` is
solved by ``h_i = r_i / (lambda, i)``.  This is the one place the unit is fixed.

Transversal
-----------
Monomials split into the transversal ``F`` (angle-independent terms of action
degree 0 or 1, and everything of action degree >= 2) and its complement
(non-zero Fourier modes of action degree 0 or 1).  Angle-independent terms of
action degree 1 shift the frequency; they belong to ``F`` and are reported.
"""
from __future__ import annotations

from typing import Callable, Sequence

from .divisors import as_frequency, is_exact_frequency, min_small_divisor, pair
from .errors import (
    ConvergenceError,
    FrequencyDriftError,
    PreconditionError,
    ResonanceError,
    SignatureError,
)
from .normal_form import (
    ActionProblem,
    IterationResult,
    Schedule,
    determinant,
    matrix_rank,
    transversal_iterate,
)
from .numbers import magnitude, to_float
from .operators import Derivation
from .scales import ScaleFamily, ScaleKind
from .series import TruncatedSeries, total_degree

# float-mode defect tolerance of the homological solve, relative to the terms involved
NEUMANN_TOL = 1e-12


# ----------------------------------------------------------------------------------
# layout
# ----------------------------------------------------------------------------------

def torus_layout(n: int, fourier_cap: int, xi_cap: int, t_cap: int | None) -> dict:
    """Signature, total cap and slot caps of a torus Hamiltonian.

    ``t_cap=None`` gives the undeformed layout without a ``t`` slot.
    """
    taylor = n + (0 if t_cap is None else 1)
    slot_caps = [(tuple(range(n)), fourier_cap), (tuple(range(n, 2 * n)), xi_cap)]
    cap = fourier_cap + xi_cap
    if t_cap is not None:
        slot_caps.append(((2 * n,), t_cap))
        cap += t_cap
    return {"signature": (n, taylor), "cap": cap, "slot_caps": tuple(slot_caps)}


def make_hamiltonian(
    n: int,
    terms,
    *,
    fourier_cap: int,
    xi_cap: int,
    t_cap: int | None = None,
    exact: bool = True,
) -> TruncatedSeries:
    """Torus Hamiltonian from ``{(i, beta[, k]): c}``.

    ``i`` is the Fourier index, ``beta`` the action exponent and ``k`` the
    ``t`` exponent (omitted when ``t_cap`` is ``None``).
    """
    lay = torus_layout(n, fourier_cap, xi_cap, t_cap)
    table = {}
    for key, c in dict(terms).items():
        key = tuple(key)
        if t_cap is None:
            i, beta = key
            idx = tuple(i) + tuple(beta)
        else:
            i, beta, k = key if len(key) == 3 else (*key, 0)
            idx = tuple(i) + tuple(beta) + (int(k),)
        table[idx] = c
    return TruncatedSeries(lay["signature"], lay["cap"], table, exact=exact, slot_caps=lay["slot_caps"])


def frequency_hamiltonian(lam, like: TruncatedSeries) -> TruncatedSeries:
    """``lambda . xi`` in the layout of ``like``."""
    n = like.signature.fourier
    size = like.signature.size
    table = {}
    for j, lj in enumerate(lam):
        idx = [0] * size
        idx[n + j] = 1
        table[tuple(idx)] = lj
    return TruncatedSeries(like.signature, like.cap, table, exact=like.exact, slot_caps=like.slot_caps)


def mixed_scale(n: int, S: float = 1.0, with_t: bool = True) -> ScaleFamily:
    """Mixed scale with the ``t`` slot weighted ``s^2`` per degree."""
    return ScaleFamily(ScaleKind.MIXED, S, (2 * n,) if with_t else ())


def _torus_dims(f: TruncatedSeries) -> int:
    n = f.signature.fourier
    if n == 0 or f.signature.taylor not in (n, n + 1):
        raise SignatureError(f"signature {tuple(f.signature)} is not a torus layout (n, n) or (n, n + 1)")
    return n


# ----------------------------------------------------------------------------------
# bracket, averaging, nondegeneracy
# ----------------------------------------------------------------------------------

def poisson_bracket(f: TruncatedSeries, h: TruncatedSeries) -> TruncatedSeries:
    """``{f, h} = sum_j (D_j f dh/dxi_j - df/dxi_j D_j h)``; ``t`` passes through."""
    f._check(h)
    n = _torus_dims(f)
    out = f.zero_like() if f.cap <= h.cap else h.zero_like()
    for j in range(n):
        Df, Dh = f.angular(j), h.angular(j)
        if not Df.is_zero:
            dh = h.derive(n + j)
            if not dh.is_zero:
                out = out + Df * dh
        if not Dh.is_zero:
            df = f.derive(n + j)
            if not df.is_zero:
                out = out - df * Dh
    return out


def average(H: TruncatedSeries) -> TruncatedSeries:
    """Angle average: keep Fourier index 0."""
    n = H.signature.fourier
    return H.select(lambda idx: not any(idx[:n]))


def isochronic_check(H0: TruncatedSeries, tol: float = 1e-12) -> dict:
    """Frequency and action Hessian of an angle-independent Hamiltonian.

    Uses the ``t``-free part.  With ``H0 = sum lambda_i xi_i + sum_{i<=j} c_ij xi_i xi_j``
    the stored matrix is ``a_ii = c_ii`` and ``a_ij = a_ji = c_ij / 2``.

    Returns
    -------
    dict
        ``lambda``, ``matrix``, ``det``, ``degenerate`` and ``fiber_dim``
        (``n - rank``; the dimension of the frequency-map fibre at jet level).

    Raises
    ------
    PreconditionError
        If ``H0`` depends on the angles.
    """
    n = _torus_dims(H0)
    if any(any(idx[:n]) for idx in H0):
        raise PreconditionError("isochronic check needs an angle-independent Hamiltonian")
    has_t = H0.signature.taylor == n + 1
    lam = [0] * n
    A = [[0] * n for _ in range(n)]
    half = (lambda c: c / 2) if H0.exact else (lambda c: to_float(c) / 2)
    for idx, c in H0.items():
        if has_t and idx[2 * n]:
            continue
        beta = idx[n:2 * n]
        deg = sum(beta)
        nz = [k for k, e in enumerate(beta) if e]
        if deg == 1:
            lam[nz[0]] = c
        elif deg == 2:
            if len(nz) == 1:
                A[nz[0]][nz[0]] = c
            else:
                i, k = nz
                A[i][k] = A[k][i] = half(c)
    det = determinant(A, H0.exact)
    rank = matrix_rank(A, H0.exact, tol)
    degenerate = (not det) if H0.exact else magnitude(det) <= tol
    return {"lambda": tuple(lam), "matrix": A, "det": det, "degenerate": bool(degenerate), "fiber_dim": n - rank}


# ----------------------------------------------------------------------------------
# bracket problems with a transversal
# ----------------------------------------------------------------------------------

class BracketProblem(ActionProblem):
    """Poisson-type action ``L_h H = {h, H}`` with a diagonal homological operator.

    Parameters
    ----------
    a0 : TruncatedSeries
        Base point whose bracket is diagonal: ``{e_idx, a0} = divisor(idx) e_idx``.
    b : TruncatedSeries
        Initial residual.
    bracket : callable
    divisor : callable
        Index -> eigenvalue of ``h -> {h, a0}``.
    in_F : callable
        Index -> whether the monomial lies in the transversal.
    scale : ScaleFamily
    res_tol : float
        Float-mode resonance threshold.
    """

    newton_ok = False

    def __init__(self, a0, b, bracket: Callable, divisor: Callable, in_F: Callable, scale: ScaleFamily,
                 res_tol: float, max_iter: int = 512):
        self.a = a0
        self.b = b
        self.bracket = bracket
        self.divisor_of = divisor
        self.in_F = in_F
        self.scale = scale
        self.res_tol = res_tol
        self.max_iter = max_iter
        self.reference = max(a0.max_abs(), b.max_abs(), 1.0)
        self._div: dict = {}
        self.neumann_iterations: list = []

    def zero_correction(self):
        return self.a.zero_like()

    def generator(self, h):
        return lambda H: self.bracket(h, H)

    def project(self, x):
        return x.select(self.in_F), x.select(lambda idx: not self.in_F(idx))

    def divide(self, x: TruncatedSeries) -> TruncatedSeries:
        """Apply the inverse of the diagonal operator to the complement part of ``x``."""
        out = {}
        for idx, c in x.items():
            if self.in_F(idx):
                continue
            d = self._div.get(idx)
            if d is None:
                d = self.divisor_of(idx)
                if (not d) if x.exact else magnitude(d) <= self.res_tol:
                    raise ResonanceError(f"resonant divisor at index {idx}", witness=list(idx), divisor=d)
                self._div[idx] = d
            out[idx] = c / d if x.exact else to_float(c) / to_float(d)
        return x._like(out)

    def complement(self, x: TruncatedSeries) -> TruncatedSeries:
        return x.select(lambda idx: not self.in_F(idx))

    def split(self, b, point):
        """``(h, alpha)`` with ``b = {h, point} + alpha`` and ``alpha`` in ``F``.

        Solves ``P {h, point} = P b`` (``P`` the complement projector) by
        defect correction around the diagonal part; the correction terminates
        on jets because ``point - a0`` raises the filtration.
        """
        target = self.clean(self.complement(b))
        h = self.divide(target)
        for it in range(self.max_iter):
            image = self.bracket(h, point)
            defect = target - self.complement(image)
            if not defect.exact:
                scale = max(target.max_abs(), image.max_abs())
                defect = defect.chop(NEUMANN_TOL, scale)
            if defect.is_zero:
                self.neumann_iterations.append(it + 1)
                return h, self._drop_complement_noise(self.clean(b - image))
            h = h + self.divide(defect)
        raise ConvergenceError("homological inverse did not converge on the jet", step=self.max_iter)

    def _drop_complement_noise(self, alpha):
        if alpha.exact:
            return alpha
        return alpha.select(self.in_F)

    def inverse_j(self, b):
        return self.split(b, self.a)[0]

    def j_bound(self, s: float):
        if not self._div:
            return None
        return max(1 / magnitude(d) for d in self._div.values())


class TorusProblem(BracketProblem):
    """``H = lambda . xi + (deformation terms)`` on the torus layout.

    The action is ``L_h H = {h, H}``; ``grade`` is the ``t``-order of the
    non-``F`` part and ``order`` the ``t``-order of the whole residual.
    """

    def __init__(self, H: TruncatedSeries, lam=None, *, scale: ScaleFamily | None = None,
                 res_tol: float | None = None, check_drift: bool = True):
        n = _torus_dims(H)
        self.n = n
        self.has_t = H.signature.taylor == n + 1
        self.t_slot = 2 * n if self.has_t else None
        if lam is None:
            lam = frequency_of(H)
        self.lam = as_frequency(lam, H.exact if is_exact_frequency(lam) else False)
        if H.exact and not is_exact_frequency(self.lam):
            H = H.to_float()
        a0 = frequency_hamiltonian(self.lam, H)
        b = H - a0
        if self.has_t:
            _check_torus_input(b, n, check_drift)
        if scale is None:
            scale = mixed_scale(n, 1.0, self.has_t)
        if res_tol is None:
            res_tol = 0.0 if H.exact else 1e-12 * max(magnitude(x) for x in self.lam)

        def divisor(idx):
            return pair(self.lam, idx[:n])

        super().__init__(a0, b, poisson_bracket, divisor, lambda idx: torus_in_F(idx, n), scale, res_tol)
        self.H = H

    def correction_bound(self, h, tau: float) -> float:
        n = self.n
        coeffs = [None] * h.signature.size
        for j in range(n):
            coeffs[j] = -h.derive(n + j)
            coeffs[n + j] = h.angular(j)
        if all(c is None or c.is_zero for c in coeffs):
            return 0.0
        # zero entries are skipped by the derivation; the t slot carries none
        coeffs = [c if c is not None else h.zero_like() for c in coeffs]
        bound = Derivation(tuple(coeffs)).analytic_bound(1, tau, self.scale)
        return float(bound)

    def order(self, x):
        if not self.has_t:
            return x.filtration_order()
        return x.order_in([self.t_slot])

    def grade(self, x):
        comp = self.complement(x)
        if not self.has_t:
            return comp.filtration_order()
        return comp.order_in([self.t_slot])

    def transform(self, us):
        """Images of ``z_j`` and ``xi_j`` under the composed canonical change."""
        sig, cap, sc = self.a.signature, self.a.cap, self.a.slot_caps
        out = {"z": [], "xi": []}
        for name, slots in (("z", range(self.n)), ("xi", range(self.n, 2 * self.n))):
            for k in slots:
                y = TruncatedSeries.monomial(sig, cap, tuple(int(q == k) for q in range(sig.size)), 1,
                                             exact=self.a.exact, slot_caps=sc)
                for u in us:
                    y = self.act(u, y, -1)
                out[name].append(y)
        return {k: tuple(v) for k, v in out.items()}


def torus_in_F(idx, n: int) -> bool:
    """Transversal membership: angle-independent, or action degree >= 2."""
    return not any(idx[:n]) or sum(idx[n:2 * n]) >= 2


def frequency_of(H: TruncatedSeries) -> tuple:
    """``lambda`` from the angle-independent, ``t``-free, action-linear part of ``H``."""
    n = _torus_dims(H)
    lam = [0] * n
    for idx, c in H.items():
        if any(idx[:n]) or any(idx[2 * n:]):
            continue
        beta = idx[n:2 * n]
        if sum(beta) == 1:
            lam[beta.index(1)] = c
    return tuple(lam)


def _check_torus_input(b: TruncatedSeries, n: int, check_drift: bool):
    for idx, c in b.items():
        t_deg = idx[2 * n]
        xi_deg = sum(idx[n:2 * n])
        if t_deg == 0 and not torus_in_F(idx, n):
            raise PreconditionError(f"t-free perturbation term {idx} is not in the transversal")
        if check_drift and t_deg > 0 and xi_deg == 1 and not any(idx[:n]):
            raise FrequencyDriftError(f"frequency depends on t through the term {idx}", index=list(idx))


def homological_inverse(alpha: TruncatedSeries, lam, cutoff: int | None = None, *,
                        res_tol: float | None = None) -> Callable:
    """The re-based inverse ``j(alpha)`` at ``lambda . xi + alpha``.

    Parameters
    ----------
    alpha : TruncatedSeries
        Point in the transversal (torus layout); ``lambda . xi + alpha`` is the
        base.  Its non-diagonal part must raise the filtration (``t``-order or
        action degree) so the defect correction terminates.
    lam : frequency
    cutoff : int, optional
        Fourier cutoff certified against resonance (default: the Fourier cap).

    Returns
    -------
    callable
        ``residual -> (h, f_part)`` with ``residual = {h, lambda.xi + alpha} + f_part``
        and ``f_part`` in ``F``.

    Raises
    ------
    ResonanceError
        If ``lambda`` is resonant below the cutoff.
    """
    n = _torus_dims(alpha)
    fourier_cap = dict(alpha.slot_caps).get(tuple(range(n)), alpha.cap)
    cutoff = fourier_cap if cutoff is None else cutoff
    cert = min_small_divisor(lam, 0, cutoff, res_tol=res_tol)
    if cert.resonant:
        raise ResonanceError(f"resonant frequency at {cert.witness}", witness=cert.witness, divisor=cert.divisor)
    base = frequency_hamiltonian(as_frequency(lam), alpha) + alpha
    p = TorusProblem(base, lam, res_tol=res_tol, check_drift=False)

    def j(residual: TruncatedSeries):
        return p.split(residual, base)

    j.problem = p
    j.certificate = cert
    return j


def kam_transversal_step(
    H: TruncatedSeries,
    steps: int,
    *,
    lam=None,
    cutoff: int | None = None,
    sched: Schedule | None = None,
    real: bool = False,
    scale: ScaleFamily | None = None,
    res_tol: float | None = None,
) -> IterationResult:
    """Transversal normal form of ``H = lambda . xi + t R`` (mod ``I^2``).

    Parameters
    ----------
    H : TruncatedSeries
        Torus layout with a ``t`` slot.
    steps : int
    lam : frequency, optional
        Defaults to the action-linear, angle-free, ``t``-free part of ``H``.
    cutoff : int, optional
        Diophantine cutoff (default: the Fourier cap of ``H``).
    sched : Schedule, optional
        Defaults to the thirds schedule.
    real : bool
        Require and report the reality symmetry ``a_{-i} = conj(a_i)``.

    Returns
    -------
    IterationResult
        ``alpha_total`` lies in ``t F``; trace ``grade`` is the ``t``-order of
        the non-``F`` residual.

    Raises
    ------
    ResonanceError, FrequencyDriftError, PreconditionError
    """
    n = _torus_dims(H)
    if H.signature.taylor != n + 1:
        raise SignatureError("kam_transversal_step needs a t slot")
    if real and H.reflect() != H:
        raise PreconditionError("Hamiltonian is not real: reflect(H) != H")
    p = TorusProblem(H, lam, scale=scale, res_tol=res_tol)
    fourier_cap = dict(H.slot_caps).get(tuple(range(n)), H.cap)
    cert = min_small_divisor(p.lam, 1, cutoff or max(fourier_cap, 1), res_tol=res_tol)
    if cert.resonant:
        raise ResonanceError(f"resonant frequency at {cert.witness}", witness=cert.witness, divisor=cert.divisor)
    res = transversal_iterate(p, p.b, steps, sched)
    res.trace.annotations["diophantine"] = cert.to_json()
    res.trace.annotations["frequency"] = [str(x) for x in p.lam]
    res.trace.annotations["neumann_iterations"] = list(p.neumann_iterations)
    if real:
        res.trace.annotations["reality"] = reality_report(res)
    return res


def reality_report(res: IterationResult) -> dict:
    """Reality symmetry of the outputs: ``alpha_total``, residual real, generators anti-real."""
    def real(x):
        return x.reflect() == x if x.exact else (x.reflect() - x).max_abs() <= 1e-12 * max(1.0, x.max_abs())

    def anti(x):
        return x.reflect() == -x if x.exact else (x.reflect() + x).max_abs() <= 1e-12 * max(1.0, x.max_abs())

    return {
        "alpha_total_real": bool(real(res.alpha_total)),
        "residual_real": bool(real(res.residual)),
        "generators_anti_real": bool(all(anti(u) for u in res.corrections)),
    }


def t_multiplication_bound(scale: ScaleFamily, s: float, probes: Sequence[TruncatedSeries], t_slot: int) -> float:
    """Measured ``sup |t f|_s / |f|_s`` over probes (the deformation axiom asks ``<= s^2``)."""
    from .scales import norm_at

    best = 0.0
    for f in probes:
        if f.is_zero:
            continue
        # terms at the top t degree would be truncated by t-multiplication
        g = f.select(lambda k: k[t_slot] < _t_cap(f, t_slot) and total_degree(k) < f.cap)
        if g.is_zero:
            continue
        idx = tuple(int(k == t_slot) for k in range(f.signature.size))
        t = TruncatedSeries.monomial(f.signature, f.cap, idx, 1, exact=f.exact, slot_caps=f.slot_caps)
        best = max(best, norm_at(t * g, scale, s) / norm_at(g, scale, s))
    return best


def _t_cap(f: TruncatedSeries, t_slot: int) -> int:
    return dict(f.slot_caps).get((t_slot,), f.cap)


# ----------------------------------------------------------------------------------
# singular KAM
# ----------------------------------------------------------------------------------

def canonical_bracket(f: TruncatedSeries, h: TruncatedSeries, n: int | None = None) -> TruncatedSeries:
    """``{f, h} = sum_i (df/dq_i dh/dp_i - df/dp_i dh/dq_i)``; slots ``q_1..q_n, p_1..p_n``."""
    f._check(h)
    if f.signature.fourier:
        raise SignatureError("canonical bracket expects Taylor slots only")
    n = f.signature.taylor // 2 if n is None else n
    out = f.zero_like()
    for i in range(n):
        fq, fp = f.derive(i), f.derive(n + i)
        if not fq.is_zero:
            hp = h.derive(n + i)
            if not hp.is_zero:
                out = out + fq * hp
        if not fp.is_zero:
            hq = h.derive(i)
            if not hq.is_zero:
                out = out - fp * hq
    return out


def singular_in_F(idx, n: int) -> bool:
    """Membership in ``I^2``, ``I = (q_1 p_1, ..., q_n p_n)``: ``sum min(a_i, b_i) >= 2``."""
    return sum(min(idx[i], idx[n + i]) for i in range(n)) >= 2


class SingularProblem(BracketProblem):
    """``H = sum lambda_i q_i p_i + R`` with ``R`` of order >= 3 and the canonical bracket.

    ``{q^a p^b, H0} = (lambda, a - b) q^a p^b``; the transversal is ``I^2``.
    """

    def __init__(self, H: TruncatedSeries, *, scale: ScaleFamily | None = None, res_tol: float | None = None):
        if H.signature.fourier or H.signature.taylor % 2:
            raise SignatureError("singular KAM needs Taylor slots q_1..q_n, p_1..p_n")
        n = H.signature.taylor // 2
        self.n = n
        lam = [0] * n
        rest = {}
        for idx, c in H.items():
            deg = sum(idx)
            if deg < 2:
                raise PreconditionError("H must vanish to order 2")
            if deg == 2:
                diag = [i for i in range(n) if idx[i] == 1 and idx[n + i] == 1]
                if not diag:
                    raise PreconditionError(f"quadratic part must be sum lambda_i q_i p_i, found term {idx}")
                lam[diag[0]] = c
            else:
                rest[idx] = c
        self.lam = as_frequency(lam, H.exact)
        a0 = H.select(lambda idx: sum(idx) == 2)
        b = H._like(rest)
        if scale is None:
            scale = ScaleFamily(ScaleKind.MAJORANT, 1.0)
        if res_tol is None:
            res_tol = 0.0 if H.exact else 1e-12 * max(magnitude(x) for x in self.lam)

        def divisor(idx):
            return pair(self.lam, [idx[i] - idx[n + i] for i in range(n)])

        super().__init__(a0, b, lambda f, h: canonical_bracket(f, h, n), divisor,
                         lambda idx: singular_in_F(idx, n), scale, res_tol)
        self.H = H

    def correction_bound(self, h, tau: float) -> float:
        n = self.n
        coeffs = [None] * (2 * n)
        for i in range(n):
            coeffs[i] = -h.derive(n + i)
            coeffs[n + i] = h.derive(i)
        if all(c.is_zero for c in coeffs):
            return 0.0
        return float(Derivation(tuple(coeffs)).analytic_bound(1, tau, self.scale))

    def grade(self, x):
        return self.complement(x).filtration_order()

    def transform(self, us):
        sig, cap = self.a.signature, self.a.cap
        out = []
        for k in range(2 * self.n):
            y = TruncatedSeries.variable(sig, cap, k, exact=self.a.exact)
            for u in us:
                y = self.act(u, y, -1)
            out.append(y)
        return {"q": tuple(out[:self.n]), "p": tuple(out[self.n:])}


def singular_kam_step(H: TruncatedSeries, steps: int, *, sched: Schedule | None = None,
                      res_tol: float | None = None) -> IterationResult:
    """Bring ``H = sum lambda_i q_i p_i + R`` to ``H0`` modulo ``I^2`` by canonical changes.

    Returns
    -------
    IterationResult
        ``alpha_total`` is the accumulated ``I^2`` part; trace ``grade`` is the
        order of the residual outside ``I^2``.

    Raises
    ------
    ResonanceError
        On ``(lambda, a - b) = 0`` for a monomial outside ``I^2``.
    """
    p = SingularProblem(H, res_tol=res_tol)
    res = transversal_iterate(p, p.b, steps, sched)
    res.trace.annotations["frequency"] = [str(x) for x in p.lam]
    return res
