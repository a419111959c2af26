"""Small divisors: diophantine certificates, Siegel divisors and Hadamard inverses.

Frequencies are tuples of scalars.  When every entry is exact (``int``,
``Fraction``, :class:`~echelon.numbers.QuadraticSurd` or
:class:`~echelon.numbers.GaussianRational`) the scans run in exact arithmetic
and resonance means an exactly vanishing divisor; otherwise they run in
floating point with a relative resonance tolerance.

Lattice scans visit one representative of each pair ``{i, -i}`` (first
nonzero entry positive), ordered by ``sigma(i)`` and then lexicographically.
Witnesses are the first index in that order achieving the minimum, so results
do not depend on how a scan is partitioned.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import PreconditionError, ResonanceError, SignatureError
from .numbers import GaussianRational, QuadraticSurd, is_exact_scalar, magnitude, to_exact, to_float
from .operators import DiagonalWeight, hadamard_product
from .series import TruncatedSeries

RES_TOL = 1e-12


def sigma(i: Sequence[int]) -> int:
    """``sigma(i) = |i_1| + ... + |i_n|``."""
    return sum(abs(int(e)) for e in i)


def as_frequency(lam, exact: bool | None = None) -> tuple:
    """Validate and coerce a frequency vector.

    ``exact=None`` keeps exact entries exact when all of them are.
    """
    lam = tuple(lam)
    if not lam:
        raise PreconditionError("empty frequency vector")
    all_exact = all(is_exact_scalar(v) for v in lam)
    if exact is None:
        exact = all_exact
    if exact:
        if not all_exact:
            raise PreconditionError("exact mode needs exact frequency entries")
        lam = tuple(to_exact(v) for v in lam)
        if any(isinstance(v, GaussianRational) for v in lam) and any(isinstance(v, QuadraticSurd) for v in lam):
            raise PreconditionError("mixing complex rationals and quadratic surds is not supported")
    else:
        lam = tuple(to_float(v) for v in lam)
    if all(not v for v in lam):
        raise PreconditionError("frequency vector is zero")
    return lam


def is_exact_frequency(lam) -> bool:
    return all(is_exact_scalar(v) for v in lam)


def pair(lam: Sequence, i: Sequence[int]):
    """``(lambda, i) = sum lambda_k i_k``."""
    return sum((v * e for v, e in zip(lam, i)), 0 if is_exact_frequency(lam) else 0.0)


@lru_cache(maxsize=64)
def lattice(n: int, cutoff: int, canonical: bool = True) -> tuple:
    """Nonzero ``i`` in ``Z^n`` with ``sigma(i) <= cutoff``, ordered by (sigma, lex).

    With ``canonical`` only the representative with first nonzero entry
    positive is kept.
    """
    out = []

    def rec(prefix, room, k):
        if k == n:
            if any(prefix):
                out.append(tuple(prefix))
            return
        for e in range(-room, room + 1):
            rec(prefix + [e], room - abs(e), k + 1)

    rec([], cutoff, 0)
    if canonical:
        out = [i for i in out if next(e for e in i if e) > 0]
    out.sort(key=lambda i: (sigma(i), i))
    return tuple(out)


@dataclass(frozen=True)
class DiophantineCert:
    """Result of a cutoff-bounded (C, tau) scan.

    ``C`` is the best constant ``min |(lambda,i)| sigma(i)^tau`` over
    ``0 < sigma(i) <= cutoff`` (``0`` at a resonance), ``witness`` the index
    achieving it and ``divisor`` the value ``(lambda, witness)``.  ``verdict``
    is ``"pass"`` when no divisor vanishes and ``C`` reaches ``required_C``
    (if one was given).
    """

    C: object
    tau: float
    cutoff: int
    witness: tuple
    divisor: object
    verdict: str
    exact: bool
    resonant: bool
    required_C: object = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        out = {
            "C": float(self.C),
            "tau": self.tau,
            "cutoff": self.cutoff,
            "witness": list(self.witness),
            "divisor": _jsonable_scalar(self.divisor),
            "verdict": self.verdict,
            "resonant": self.resonant,
            "exact": self.exact,
        }
        if self.exact and not isinstance(self.C, float):
            out["C_exact"] = str(self.C)
        if self.required_C is not None:
            out["required_C"] = float(self.required_C)
        return out


def _jsonable_scalar(v):
    if isinstance(v, (complex, GaussianRational)):
        z = complex(v)
        return {"re": z.real, "im": z.imag}
    return float(v)


def _check_tau(tau):
    if tau < 0:
        raise PreconditionError("tau must be non-negative")


def min_small_divisor(
    lam,
    tau,
    cutoff: int,
    *,
    exact: bool | None = None,
    C=None,
    res_tol: float | None = None,
) -> DiophantineCert:
    """Exhaustive scan of ``|(lambda, i)| sigma(i)^tau`` over ``0 < sigma(i) <= cutoff``.

    Parameters
    ----------
    lam : sequence of scalars
    tau : int or float
    cutoff : int
    exact : bool, optional
        Force exact or float arithmetic (default: exact iff ``lam`` is exact).
    C : scalar, optional
        Required constant; the verdict fails when the best constant is smaller.
    res_tol : float, optional
        Float-mode resonance threshold, default ``1e-12 * max|lambda_k|``.

    Returns
    -------
    DiophantineCert
    """
    if cutoff < 1:
        raise PreconditionError("cutoff must be >= 1")
    _check_tau(tau)
    lam = as_frequency(lam, exact)
    exact = is_exact_frequency(lam)
    indices = lattice(len(lam), int(cutoff))
    if exact:
        return _scan_exact(lam, tau, cutoff, indices, C)
    return _scan_float(lam, tau, cutoff, indices, C, res_tol)


def _scan_exact(lam, tau, cutoff, indices, C):
    complex_mode = any(isinstance(v, GaussianRational) for v in lam)
    int_tau = float(tau).is_integer()
    best_key = None
    best = None
    for i in indices:
        d = pair(lam, i)
        if not d:
            return DiophantineCert(Fraction(0), tau, cutoff, i, d, "fail", True, True, C)
        s = sigma(i)
        if complex_mode:
            mag2 = d.abs2() if isinstance(d, GaussianRational) else d * d
            key = mag2 * Fraction(s) ** int(2 * tau) if int_tau else float(mag2) * s ** (2 * tau)
        else:
            key = abs(d) * Fraction(s) ** int(tau) if int_tau else float(abs(d)) * s**tau
        if best_key is None or key < best_key:
            best_key, best = key, (i, d)
    i, d = best
    if complex_mode:
        value = math.sqrt(float(best_key))
    else:
        value = best_key
    verdict = "pass" if C is None or value >= C else "fail"
    return DiophantineCert(value, tau, cutoff, i, d, verdict, True, False, C)


def _scan_float(lam, tau, cutoff, indices, C, res_tol):
    vec = np.array(lam, dtype=complex if any(isinstance(v, complex) for v in lam) else float)
    if res_tol is None:
        res_tol = RES_TOL * float(np.max(np.abs(vec)))
    I = np.array(indices, dtype=np.int64)
    dots = I @ vec
    mags = np.abs(dots)
    sig = np.abs(I).sum(1).astype(float)
    resonant = np.nonzero(mags <= res_tol)[0]
    if len(resonant):
        k = int(resonant[0])
        return DiophantineCert(0.0, tau, cutoff, indices[k], _py(dots[k]), "fail", False, True, C)
    vals = mags * sig**tau
    k = int(np.argmin(vals))
    value = float(vals[k])
    verdict = "pass" if C is None or value >= C else "fail"
    return DiophantineCert(value, tau, cutoff, indices[k], _py(dots[k]), verdict, False, False, C)


def _py(x):
    x = complex(x)
    return x if x.imag else x.real


class SiegelDivisor(NamedTuple):
    j: tuple
    i: int
    value: object
    resonant: bool


def siegel_exponents(n: int, cutoff: int, low: int = 2) -> list:
    """``j`` in ``N^n`` with ``low <= |j| <= cutoff``, ordered by (|j|, j)."""
    out = []

    def rec(prefix, room, k):
        if k == n - 1:
            for e in range(room + 1):
                j = tuple(prefix + [e])
                if sum(j) >= low:
                    out.append(j)
            return
        for e in range(room + 1):
            rec(prefix + [e], room - e, k + 1)

    rec([], cutoff, 0)
    out.sort(key=lambda j: (sum(j), j))
    return out


def siegel_divisors(lam, cutoff: int, res_tol: float | None = None, *, exact: bool | None = None) -> list:
    """Table of ``(j, lambda) - lambda_i`` for ``2 <= |j| <= cutoff``.

    ``i`` is a 0-based component index.  Entries with magnitude below
    ``res_tol`` (exact zero in exact mode) are flagged resonant.
    """
    lam = as_frequency(lam, exact)
    exact = is_exact_frequency(lam)
    if res_tol is None:
        res_tol = 0.0 if exact else RES_TOL * max(magnitude(v) for v in lam)
    rows = []
    for j in siegel_exponents(len(lam), cutoff):
        base = pair(lam, j)
        for i, li in enumerate(lam):
            v = base - li
            resonant = (not v) if exact else magnitude(v) <= res_tol
            rows.append(SiegelDivisor(j, i, v, resonant))
    return rows


def poincare_domain(lam) -> bool:
    """True when 0 is outside the closed convex hull of the ``lambda_i``.

    In that case the Siegel divisors ``(j,lambda) - lambda_i`` are bounded
    away from zero for large ``|j|``.
    """
    zs = [complex(to_float(v)) for v in lam]
    if any(z == 0 for z in zs):
        return False
    angles = sorted(cmath.phase(z) for z in zs)
    gaps = [b - a for a, b in zip(angles, angles[1:])] + [angles[0] + 2 * math.pi - angles[-1]]
    return max(gaps) > math.pi + 1e-15


def small_divisor_series(lam, cutoff: int, *, exact: bool | None = None, res_tol: float | None = None) -> TruncatedSeries:
    """``g = sum_{0 < sigma(i) <= cutoff} e_i / (lambda, i)`` on the torus lattice.

    Raises
    ------
    ResonanceError
        If some divisor vanishes; the witness is reported.
    """
    cert = min_small_divisor(lam, 0, cutoff, exact=exact, res_tol=res_tol)
    if cert.resonant:
        raise ResonanceError(
            f"resonant frequency: (lambda, {cert.witness}) = 0", witness=cert.witness, divisor=cert.divisor
        )
    lam = as_frequency(lam, exact)
    ex = is_exact_frequency(lam)
    table = {}
    for i in lattice(len(lam), int(cutoff), canonical=False):
        d = pair(lam, i)
        table[i] = 1 / d
    return TruncatedSeries((len(lam), 0), cutoff, table, exact=ex)


def hadamard(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    """Hadamard product ``f * g = sum a_i b_i e_i``."""
    return hadamard_product(f, g)


def frequency_derivation(f: TruncatedSeries, lam, unit=1) -> TruncatedSeries:
    """``D f = sum_j lambda_j z_j d/dz_j f``: multiply ``a_i`` by ``unit (lambda, i)``.

    Only the first ``len(lam)`` (Fourier) slots enter the pairing.
    """
    n = len(lam)
    if f.signature.fourier < n:
        raise SignatureError(f"series has {f.signature.fourier} Fourier slots, frequency has {n}")
    return f.map_coeffs(lambda idx, c: c * pair(lam, idx[:n]) * unit)


def divide_by_frequency(f: TruncatedSeries, lam, *, res_tol: float | None = None) -> TruncatedSeries:
    """Right inverse of :func:`frequency_derivation` on series without zero modes.

    Each coefficient ``a_i`` becomes ``a_i / (lambda, i_F)`` where ``i_F`` is
    the Fourier part of the index; this is the Hadamard product with
    :func:`small_divisor_series` extended trivially to extra Taylor slots.

    Raises
    ------
    ResonanceError
        On a term with vanishing divisor (including Fourier index 0).
    """
    n = len(lam)
    exact = f.exact and is_exact_frequency(lam)
    if res_tol is None:
        res_tol = 0.0 if exact else RES_TOL * max(magnitude(v) for v in lam)
    cache: dict = {}
    out = {}
    for idx, c in f.items():
        key = idx[:n]
        d = cache.get(key)
        if d is None:
            d = pair(lam, key)
            if (not d) if exact else magnitude(d) <= res_tol:
                raise ResonanceError(f"vanishing divisor at Fourier index {key}", witness=key, divisor=d)
            cache[key] = d
        out[idx] = c / d if exact else to_float(c) / to_float(d)
    return TruncatedSeries(f.signature, f.cap, out, exact=f.exact, slot_caps=f.slot_caps)


def L_operator(tau) -> DiagonalWeight:
    """Diagonal ``L e_i = (1 + sum_j |i_j|^tau) e_i``."""
    return DiagonalWeight({"name": "L", "tau": tau})


def transfer_constant(cert: DiophantineCert, n: int) -> float:
    """Constant ``K`` with ``|f * g|_s <= K |L f|_s`` on zero-mean jets below the cutoff.

    From ``1/|(lambda,i)| <= sigma(i)^tau / C`` and the power-mean inequality
    ``sigma(i)^tau <= n^{max(tau-1, 0)} sum_j |i_j|^tau``.
    """
    if cert.resonant or not cert.C:
        return math.inf
    return n ** max(cert.tau - 1, 0) / float(cert.C)


def measure_fractions(tau, C_grid: Sequence[float], samples: int, seed: int, cutoff: int, n: int = 2) -> list:
    """Monte-Carlo fraction of ``lambda`` uniform in ``[0,1]^n`` passing (C, tau, cutoff).

    Returns ``[(C, fraction), ...]`` in the order of ``C_grid``.
    """
    rng = np.random.default_rng(seed)
    lams = rng.random((samples, n))
    I = np.array(lattice(n, int(cutoff)), dtype=np.int64)
    sig = np.abs(I).sum(1).astype(float) ** tau
    best = np.empty(samples)
    step = max(1, (1 << 22) // max(1, len(I)))
    for r0 in range(0, samples, step):
        block = np.abs(lams[r0:r0 + step] @ I.T) * sig[None, :]
        best[r0:r0 + step] = block.min(1)
    return [(float(C), float(np.mean(best >= C))) for C in C_grid]
