"""Independent sympy oracles: direct order-by-order solves, no package code."""
from __future__ import annotations

import itertools

import sympy as sp


def monomials(n: int, low: int, high: int):
    for d in range(low, high + 1):
        for j in itertools.product(range(d + 1), repeat=n):
            if sum(j) == d:
                yield j


def siegel_conjugacy(v, lam, cap: int):
    """Solve ``v(h) = Dh . diag(lam) z`` for ``h = z + O(z^2)`` degree by degree.

    ``v`` is a list of sympy polynomials in ``z0..z{n-1}``; returns the list of
    ``h_i`` as sympy expressions truncated at ``cap``.
    """
    n = len(lam)
    z = sp.symbols(f"z0:{n}")
    h = [z[i] for i in range(n)]
    scale_t = sp.Symbol("eps")
    for d in range(2, cap + 1):
        unknowns = {}
        trial = []
        for i in range(n):
            expr = h[i]
            for j in monomials(n, d, d):
                c = sp.Symbol(f"c_{i}_{'_'.join(map(str, j))}")
                unknowns[(i, j)] = c
                expr = expr + c * sp.prod([z[k] ** j[k] for k in range(n)])
            trial.append(expr)
        eqs = []
        for i in range(n):
            lhs = v[i].subs({z[k]: trial[k] for k in range(n)}, simultaneous=True)
            rhs = sum(lam[k] * z[k] * sp.diff(trial[i], z[k]) for k in range(n))
            diff = sp.expand((lhs - rhs).subs({z[k]: scale_t * z[k] for k in range(n)}))
            part = diff.coeff(scale_t, d)
            poly = sp.Poly(part, *z)
            eqs.extend(poly.coeffs())
        sol = sp.solve(eqs, list(unknowns.values()), dict=True)
        if not sol:
            raise ValueError(f"no conjugacy at degree {d}")
        h = [sp.expand(t.subs(sol[0])) for t in trial]
    return h


def morse_root(cap: int):
    """Coefficients of ``phi`` with ``phi^2 = x^2 (1 + x)``, ``phi = x + ...``, up to ``cap``."""
    x = sp.Symbol("x")
    phi = x
    for d in range(2, cap + 1):
        c = sp.Symbol("c")
        trial = phi + c * x ** d
        eq = sp.expand(trial ** 2 - x ** 2 - x ** 3).coeff(x, d + 1)
        phi = trial.subs(c, sp.solve(eq, c)[0])
    return [sp.Rational(sp.expand(phi).coeff(x, k)) for k in range(cap + 1)]


def homological_torus(residual: dict, lam):
    """``{h, lambda.xi} = r`` solved coefficientwise by sympy: ``h_i = r_i / (lambda, i)``."""
    out = {}
    for idx, c in residual.items():
        i, rest = idx
        d = sum(sp.nsimplify(a) * b for a, b in zip(lam, i))
        out[idx] = sp.nsimplify(c) / d
    return out


def small_divisor_min(lam, tau, cutoff: int):
    """Brute-force ``min |(lambda, i)| |i|^tau`` over all nonzero ``|i| <= cutoff`` with sympy."""
    best = None
    n = len(lam)
    for i in itertools.product(range(-cutoff, cutoff + 1), repeat=n):
        size = sum(abs(a) for a in i)
        if size == 0 or size > cutoff:
            continue
        val = sp.Abs(sum(sp.nsimplify(a) * b for a, b in zip(lam, i))) * sp.Integer(size) ** tau
        if best is None or sp.simplify(val - best) < 0:
            best = val
    return sp.nsimplify(best)
