import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from echelon.divisors import (
    L_operator,
    as_frequency,
    divide_by_frequency,
    frequency_derivation,
    hadamard,
    lattice,
    measure_fractions,
    min_small_divisor,
    poincare_domain,
    siegel_divisors,
    sigma,
    small_divisor_series,
    transfer_constant,
)
from echelon.errors import PreconditionError, ResonanceError
from echelon.numbers import GaussianRational, QuadraticSurd, parse_number
from echelon.scales import ScaleFamily, ScaleKind, norm_at
from echelon.series import TruncatedSeries

from oracles import small_divisor_min

PHI = parse_number("(1+sqrt(5))/2", exact=True)
SQRT2 = parse_number("sqrt(2)", exact=True)


@pytest.mark.parametrize("i,want", [((1, -2, 3), 6), ((0, 0, 0), 0), ((5, 0), 5)])
def test_sigma(i, want):
    assert sigma(i) == want


def test_lattice_is_canonical_half():
    full = {i for i in itertools.product(range(-3, 4), repeat=2) if 0 < sum(map(abs, i)) <= 3}
    half = set(lattice(2, 3))
    assert len(half) * 2 == len(full)
    assert all(next(e for e in i if e) > 0 for i in half)


def test_resonant_pair():
    cert = min_small_divisor((1, 1), 1, 5)
    assert cert.resonant and cert.verdict == "fail"
    assert cert.witness == (1, -1) and cert.divisor == 0


def test_golden_frequency_matches_fibonacci_minimum():
    cert = min_small_divisor((1, PHI), 1, 50)
    assert cert.passed and cert.exact
    phi = (1 + math.sqrt(5)) / 2
    fib = [1, 1]
    while fib[-1] + fib[-2] <= 50:
        fib.append(fib[-1] + fib[-2])
    candidates = [(1, 0), (0, 1)] + [(fib[k + 1], -fib[k]) for k in range(len(fib) - 1)]
    values = {c: abs(c[0] + phi * c[1]) * (abs(c[0]) + abs(c[1])) for c in candidates if sum(map(abs, c)) <= 50}
    best = min(values, key=values.get)
    assert float(cert.C) == pytest.approx(values[best], rel=1e-14)
    assert tuple(cert.witness) in values


def test_exact_scan_matches_sympy_brute_force():
    cert = min_small_divisor((1, SQRT2), 1, 8)
    oracle = small_divisor_min([1, sp.sqrt(2)], 1, 8)
    assert isinstance(cert.C, QuadraticSurd)
    assert sp.nsimplify(cert.C.a + cert.C.b * sp.sqrt(2)) == sp.nsimplify(oracle)


def test_float_scan_matches_numpy_brute_force():
    lam = (0.3, 0.77123, 0.1119)
    cert = min_small_divisor(lam, 2, 6)
    pts = np.array([i for i in itertools.product(range(-6, 7), repeat=3) if 0 < sum(map(abs, i)) <= 6])
    vals = np.abs(pts @ np.array(lam)) * np.abs(pts).sum(1) ** 2
    assert float(cert.C) == pytest.approx(vals.min(), rel=1e-12)


def test_integer_lattice_scan_hits_resonance():
    # (1, 2) . (2, -1) = 0, so the scan reports a resonance instead of C = 1
    cert = min_small_divisor((1, 2), 0, 10)
    assert cert.resonant and tuple(cert.witness) == (2, -1)


def test_required_constant_sets_verdict():
    assert min_small_divisor((1, PHI), 1, 20, C=Fraction(1, 2)).verdict == "pass"
    assert min_small_divisor((1, PHI), 1, 20, C=2).verdict == "fail"


def test_gaussian_frequency():
    cert = min_small_divisor((GaussianRational(1, 1), GaussianRational(0, 1)), 0, 4)
    assert not cert.resonant and cert.C == 1
    assert cert.to_json()["divisor"].keys() == {"re", "im"}


def test_empty_and_zero_frequencies_rejected():
    with pytest.raises(PreconditionError):
        as_frequency(())
    with pytest.raises(PreconditionError):
        as_frequency((0, 0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=7), min_size=2, max_size=3),
       st.fractions(min_value=-3, max_value=3, max_denominator=5).filter(bool),
       st.integers(0, 2))
def test_scale_invariance(lam, c, tau):
    if not any(lam):
        return
    a = min_small_divisor(lam, tau, 5)
    b = min_small_divisor([c * x for x in lam], tau, 5)
    assert b.C == abs(c) * a.C
    assert b.witness == a.witness


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3), st.floats(0.05, 3))
def test_best_constant_nonincreasing_in_cutoff(a, b):
    cs = [min_small_divisor((a, b), 1, k).C for k in range(1, 9)]
    assert all(y <= x for x, y in zip(cs, cs[1:]))


def test_siegel_divisors_examples():
    assert not any(d.resonant for d in siegel_divisors((1,), 10))
    table = {(d.j, d.i): d for d in siegel_divisors((1, -1), 3)}
    assert table[((1, 1), 0)].value == -1
    assert table[((2, 1), 0)].resonant
    assert {(d.j, d.i): d.value for d in siegel_divisors((2, 3), 2)}[((2, 0), 1)] == 1


def test_poincare_domain():
    assert poincare_domain((1, 2))
    assert not poincare_domain((1, -1))


def test_small_divisor_series_examples():
    g = small_divisor_series((1, PHI), 6)
    assert g[(1, 0)] == 1
    assert g[(0, 0)] == 0
    h = small_divisor_series((1, SQRT2), 4)
    assert float(h[(1, -1)]) == pytest.approx(-2.41421356, abs=1e-8)


def test_small_divisor_series_resonance():
    with pytest.raises(ResonanceError) as info:
        small_divisor_series((1, 1), 4)
    assert tuple(info.value.witness) == (1, -1)


def test_hadamard_examples():
    f = TruncatedSeries((2, 0), 6, {(1, 0): 1, (0, 1): 1}, exact=True)
    ones = TruncatedSeries((2, 0), 6, {i: 1 for i in lattice(2, 6, canonical=False)}, exact=True)
    assert hadamard(f, ones) == f
    assert hadamard(f, f.zero_like()).is_zero
    got = hadamard(f, small_divisor_series((1, PHI), 6))
    assert got[(1, 0)] == 1 and got[(0, 1)] == 1 / PHI


def _zero_mean(table):
    return {k: v for k, v in table.items() if any(k)}


torus_tables = st.dictionaries(st.tuples(st.integers(-6, 6), st.integers(-6, 6)),
                               st.fractions(min_value=-3, max_value=3, max_denominator=5), max_size=12)


@settings(max_examples=100, deadline=None)
@given(torus_tables)
def test_homological_identity(table):
    lam = (1, SQRT2)
    f = TruncatedSeries((2, 0), 20, _zero_mean(table), exact=True)
    g = small_divisor_series(lam, 20)
    assert frequency_derivation(hadamard(f, g), lam) == f
    assert divide_by_frequency(f, lam) == hadamard(f, g)


@settings(max_examples=40, deadline=None)
@given(torus_tables, st.floats(0.05, 0.9))
def test_bound_transfer_through_L(table, s):
    lam, tau, cutoff = (1.0, math.sqrt(2)), 1, 12
    cert = min_small_divisor(lam, tau, cutoff)
    K = transfer_constant(cert, 2)
    f = TruncatedSeries((2, 0), cutoff, {k: float(v) for k, v in _zero_mean(table).items()})
    fg = hadamard(f, small_divisor_series(lam, cutoff))
    for kind in (ScaleKind.STRIP, ScaleKind.HILBERT):
        scale = ScaleFamily(kind, 1.0)
        assert norm_at(fg, scale, s) <= K * norm_at(L_operator(tau)(f), scale, s) * (1 + 1e-12)


def test_measure_fraction_limits():
    rows = dict(measure_fractions(1, [10.0, 1e-9], 500, 3, 10))
    assert rows[10.0] == 0.0
    assert rows[1e-9] == 1.0


def test_measure_fraction_monotone_in_C():
    rows = measure_fractions(2, [1.0, 0.1, 0.01, 0.001], 2000, 1, 20)
    fracs = [f for _, f in rows]
    assert fracs == sorted(fracs)


def test_measure_is_seeded():
    assert measure_fractions(2, [0.01], 300, 7, 15) == measure_fractions(2, [0.01], 300, 7, 15)
