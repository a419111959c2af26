import json
import math
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from echelon.errors import DegenerateError, PreconditionError, ResonanceError, ScaleDomainError
from echelon.normal_form import (
    IterationTrace,
    Schedule,
    conjugacy_defect,
    determinant,
    lemma_applicable,
    matrix_rank,
    morse_reduce,
    residual_bound,
    siegel_linearize,
    solve_linear,
)
from echelon.numbers import parse_number
from echelon.series import ORDER_INFINITY, TruncatedSeries, compose

from oracles import morse_root, siegel_conjugacy

PHI = parse_number("(1+sqrt(5))/2", exact=True)


def var(sig, cap, k):
    return TruncatedSeries.variable(sig, cap, k, exact=True)


# schedules and lemma bounds

def test_halving_schedule_values():
    vals = Schedule(1.0).values(4)
    assert vals == [(2.0, 0.0), (2.0, 0.25), (1.5, 0.125), (1.25, 0.0625), (1.125, 0.03125)]


def test_thirds_schedule_values():
    vals = Schedule(1.0, "thirds", k=1).values(4)
    assert [s for s, _ in vals] == pytest.approx([2.5, 2.5, 2.5, 1.5, 7 / 6])
    assert vals[3][1] == pytest.approx(1 / 9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.sampled_from(["halving", "thirds"]), st.integers(0, 3), st.integers(0, 3))
def test_schedules_stay_above_base_scale(s, rule, k, l):
    vals = Schedule(s, rule, k=k, l=l).values(30)
    assert all(s_n > s * (1 - 1e-12) for s_n, _ in vals)
    assert all(b <= a for (a, _), (b, _) in zip(vals, vals[1:]))


def test_schedule_errors():
    with pytest.raises(ScaleDomainError):
        Schedule(0.0)
    with pytest.raises(ScaleDomainError):
        Schedule(1.0, "custom", sigmas=(0.6, 0.6), s0=2.0).values(2)
    with pytest.raises(PreconditionError):
        Schedule(1.0, "custom")


def test_residual_bound_examples():
    assert residual_bound(1.0, 2.0, 1.0, 0.0) == 0.0
    assert residual_bound(1.0, 2.0, 1.0, 1 / 6) == pytest.approx(1.0)
    assert residual_bound(1.0, 1.0, 1.0, 0.1) == math.inf
    assert lemma_applicable(2.0, 1.0, 1 / 6)
    assert not lemma_applicable(2.0, 1.0, 0.2)


# exact linear algebra

matrices = st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.fractions(-5, 5, max_denominator=4), min_size=n, max_size=n), min_size=n, max_size=n))


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_linear_algebra_matches_sympy(M):
    ref = sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in row] for row in M])
    assert determinant(M, True) == Fraction(str(ref.det()))
    assert matrix_rank(M, True) == ref.rank()
    if ref.det() != 0:
        inv = solve_linear(M, True)
        assert [[Fraction(str(v)) for v in row] for row in ref.inv().tolist()] == [list(r) for r in inv]


# Morse reduction

def test_morse_orders_double_minus_two():
    x = var((0, 1), 32, 0)
    res = morse_reduce(x * x + x ** 3, 4)
    assert res.trace.orders() == [4, 6, 10, 18]
    assert res.trace.lemma_violations() == []


def test_morse_coordinate_matches_square_root_oracle():
    x = var((0, 1), 32, 0)
    f = x * x + x ** 3
    res = morse_reduce(f, 4)
    phi, psi = res.coordinates["phi"][0], res.coordinates["psi"][0]
    oracle = morse_root(16)
    assert [phi[(k,)] for k in range(17)] == [Fraction(str(c)) for c in oracle]
    assert (compose(f, [psi]) - x * x).filtration_order() >= 18


def test_morse_two_variables():
    x, y = var((0, 2), 16, 0), var((0, 2), 16, 1)
    assert morse_reduce(x * x + y * y + x ** 3, 3).trace.orders() == [4, 6, 10]


def test_morse_mixed_hessian_finishes():
    x, y = var((0, 2), 8, 0), var((0, 2), 8, 1)
    assert morse_reduce(x * y + x ** 3, 2).trace.orders() == [ORDER_INFINITY]


def test_morse_picard_is_linear():
    x = var((0, 1), 32, 0)
    assert morse_reduce(x * x + x ** 3, 4, strategy="picard").trace.orders() == [4, 5, 6, 7]


def test_morse_single_sequence_and_newton_agree():
    x = var((0, 1), 32, 0)
    f = x * x + x ** 3
    assert morse_reduce(f, 3, single_sequence=True).trace.orders() == [4, 6, 10]
    assert morse_reduce(f, 3, strategy="newton").trace.orders() == [4, 6, 10]


def test_morse_quadratic_is_fixed():
    x, y = var((0, 2), 6, 0), var((0, 2), 6, 1)
    res = morse_reduce(x * x - y * y, 3)
    assert res.element.is_identity and len(res.trace) == 0


def test_morse_degenerate():
    x = var((0, 2), 6, 0)
    with pytest.raises(DegenerateError):
        morse_reduce(x * x + x ** 3, 1)


def test_unknown_strategy():
    x = var((0, 1), 6, 0)
    with pytest.raises(PreconditionError):
        morse_reduce(x * x + x ** 3, 1, strategy="gradient")


# Siegel linearization

def _coeffs_1d(h, cap):
    return [h[(k,)] for k in range(cap + 1)]


def test_siegel_quadratic_is_one_step():
    z = var((0, 1), 8, 0)
    res = siegel_linearize([z + z * z], 3)
    assert res.trace.orders() == [ORDER_INFINITY]
    assert _coeffs_1d(res.coordinates["h"][0], 8) == [0] + [1] * 8


def test_siegel_cubic_matches_sympy_solve():
    z = var((0, 1), 16, 0)
    v = [z + z * z + 2 * z ** 3]
    res = siegel_linearize(v, 4)
    assert res.trace.orders() == [4, 8, 16, ORDER_INFINITY]
    zs = sp.Symbol("z0")
    oracle = sp.Poly(siegel_conjugacy([zs + zs ** 2 + 2 * zs ** 3], [1], 8)[0], zs).all_coeffs()[::-1]
    assert _coeffs_1d(res.coordinates["h"][0], 8) == [Fraction(str(c)) for c in oracle]
    assert all(d.is_zero for d in conjugacy_defect(v, res.coordinates["h"], [1]))


def test_siegel_newton_and_picard():
    z = var((0, 1), 16, 0)
    v = [z + z * z + 2 * z ** 3]
    assert siegel_linearize(v, 4, strategy="newton").trace.orders() == [4, 8, 16, ORDER_INFINITY]
    assert siegel_linearize(v, 4, strategy="picard").trace.orders() == [4, 5, 6, 7]


def test_siegel_golden_pair_matches_sympy_solve():
    z1, z2 = var((0, 2), 6, 0), var((0, 2), 6, 1)
    v = [z1 + z1 * z2, z2.scale(PHI)]
    res = siegel_linearize(v, 3)
    h = res.coordinates["h"]
    a, b = sp.symbols("z0 z1")
    P = (1 + sp.sqrt(5)) / 2
    oracle = sp.Poly(siegel_conjugacy([a + a * b, P * b], [1, P], 6)[0], a, b)
    for (e1, e2), c in zip(oracle.monoms(), oracle.coeffs()):
        got = h[0][(e1, e2)]
        assert sp.simplify(sp.sympify(str(got)) - c) == 0
    assert all(d.is_zero for d in conjugacy_defect(v, h, [1, PHI]))


def test_siegel_float_mode_agrees_with_exact():
    z = var((0, 1), 12, 0)
    exact = siegel_linearize([z + z * z + 2 * z ** 3], 4).coordinates["h"][0]
    fz = TruncatedSeries.variable((0, 1), 12, 0)
    flo = siegel_linearize([fz + fz * fz + fz ** 3 * 2.0], 4).coordinates["h"][0]
    for k in range(13):
        assert float(flo[(k,)]) == pytest.approx(float(exact[(k,)]), rel=1e-10)


def test_siegel_linear_field_is_fixed():
    z1, z2 = var((0, 2), 4, 0), var((0, 2), 4, 1)
    res = siegel_linearize([z1, z2.scale(2)], 2)
    assert res.element.is_identity and len(res.trace) == 0


def test_siegel_resonance_witness():
    z1, z2 = var((0, 2), 4, 0), var((0, 2), 4, 1)
    with pytest.raises(ResonanceError) as info:
        siegel_linearize([z1, z2.scale(2) + z1 * z1], 2)
    assert info.value.witness == {"j": [2, 0], "i": 2}


# traces

def test_trace_serialisation_is_stable():
    x = var((0, 1), 16, 0)
    t1 = morse_reduce(x * x + x ** 3, 3).trace
    t2 = morse_reduce(x * x + x ** 3, 3).trace
    assert t1.to_csv() == t2.to_csv() and t1.dumps() == t2.dumps()
    header = t1.to_csv().splitlines()[0].split(",")
    assert tuple(header) == IterationTrace.CSV_COLUMNS
    rows = json.loads(t1.dumps())["rows"]
    assert [r["next_residual_order"] for r in rows] == [4, 6, 10]
