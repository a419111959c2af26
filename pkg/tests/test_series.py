from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echelon.errors import ParseError, SignatureError
from echelon.numbers import GaussianRational, QuadraticSurd, parse_number
from echelon.series import (
    ORDER_INFINITY,
    TruncatedSeries,
    _mul_indexed,
    _mul_numpy,
    _mul_python,
    compose,
    from_literal,
    index_box,
    to_literal,
)

SIG = (1, 2)


def tables(sig=SIG, fourier=3, taylor=3, size=12):
    m, p = sig
    idx = st.tuples(*([st.integers(-fourier, fourier)] * m + [st.integers(0, taylor)] * p))
    val = st.fractions(min_value=-4, max_value=4, max_denominator=6)
    return st.dictionaries(idx, val, max_size=size)


def series(table, cap=7, exact=True, slot_caps=None):
    return TruncatedSeries(SIG, cap, table, exact=exact, slot_caps=slot_caps)


def test_drops_zero_and_out_of_cap_terms():
    f = TruncatedSeries((0, 1), 3, {(1,): 2, (2,): 0, (4,): 5}, exact=True)
    assert dict(f.items()) == {(1,): Fraction(2)}


def test_fourier_degree_counts_absolute_value():
    f = TruncatedSeries((1, 1), 2, {(-2, 0): 1, (-2, 1): 1}, exact=True)
    assert set(f.coeffs) == {(-2, 0)}


def test_rejects_negative_taylor_exponent():
    with pytest.raises(SignatureError):
        TruncatedSeries((0, 1), 3, {(-1,): 1})


def test_product_truncates_at_cap():
    x = TruncatedSeries.variable((0, 1), 4, 0, exact=True)
    assert (x ** 3 * x ** 3).is_zero
    assert (x + 1) ** 5 == TruncatedSeries((0, 1), 4, {(k,): [1, 5, 10, 10, 5][k] for k in range(5)}, exact=True)


def test_fourier_modes_multiply_as_characters():
    e1 = TruncatedSeries.monomial((1, 0), 4, (1,), exact=True)
    em1 = TruncatedSeries.monomial((1, 0), 4, (-1,), exact=True)
    assert e1 * em1 == TruncatedSeries.constant((1, 0), 4, exact=True)


def test_slot_caps_restrict_products():
    caps = (((1,), 1),)
    x = TruncatedSeries.variable(SIG, 6, 1, exact=True, slot_caps=caps)
    assert (x * x).is_zero


def test_derive_and_integrate_are_inverse():
    f = TruncatedSeries((0, 2), 5, {(0, 0): 3, (2, 1): 4, (1, 3): -2}, exact=True)
    g = f.derive(0).integrate(0)
    assert g == f - f.select(lambda k: k[0] == 0)


def test_angular_derivation_is_diagonal():
    f = TruncatedSeries((1, 1), 4, {(3, 0): 1, (-2, 1): 5}, exact=True)
    assert dict(f.angular(0).items()) == {(3, 0): 3, (-2, 1): -10}


def test_filtration_order():
    f = TruncatedSeries((0, 2), 6, {(2, 1): 1, (0, 4): 1}, exact=True)
    assert f.filtration_order() == 3
    assert f.zero_like().filtration_order() == ORDER_INFINITY
    assert f.order_in([1]) == 1


def test_reflect_conjugates_mode_pairs():
    f = TruncatedSeries((1, 0), 3, {(1,): GaussianRational(1, 2), (-1,): GaussianRational(1, -2)}, exact=True)
    assert f.reflect() == f


def test_compose_substitutes_taylor_slots():
    x = TruncatedSeries.variable((0, 1), 6, 0, exact=True)
    f = x * x + x
    g = compose(f, [x + x * x])
    assert g == (x + x * x) ** 2 + x + x * x


def test_index_box_counts():
    assert len(list(index_box((0, 2), 3))) == 10
    assert len(list(index_box((1, 0), 2))) == 5


def test_literal_round_trip_exact_and_surd():
    phi = parse_number("(1+sqrt(5))/2", exact=True)
    f = TruncatedSeries((1, 1), 4, {(1, 0): Fraction(3, 7), (-1, 2): GaussianRational(1, -1), (0, 1): phi}, exact=True)
    g = from_literal(to_literal(f))
    assert g == f
    assert isinstance(g[(0, 1)], QuadraticSurd)


def test_literal_round_trip_float():
    f = TruncatedSeries((0, 2), 3, {(1, 0): 0.1, (0, 2): 1.5 - 2j})
    assert from_literal(to_literal(f)) == f


@pytest.mark.parametrize("text", ['{"cap": 3}', "[]", '{"signature": [0, 1], "cap": 2, "coeffs": [{"idx": [1, 2]}]}',
                                  '{"signature": [0, 1], "cap": 2, "coeffs": [{"idx": [1]}, {"idx": [1]}]}', "{bad"])
def test_literal_parse_errors(text):
    with pytest.raises(ParseError):
        from_literal(text)


@settings(max_examples=40, deadline=None)
@given(tables((0, 3)), tables((0, 3)), tables((0, 3)))
def test_taylor_ring_axioms(a, b, c):
    f, g, h = (TruncatedSeries((0, 3), 7, t, exact=True) for t in (a, b, c))
    assert f * g == g * f
    assert (f * g) * h == f * (g * h)
    assert f * (g + h) == f * g + f * h


@settings(max_examples=40, deadline=None)
@given(tables(), tables(), tables())
def test_fourier_product_is_truncated_full_product(a, b, c):
    # |i| truncation is not an ideal, so only commutativity and distributivity survive
    f, g, h = series(a), series(b), series(c)
    full = series(dict(f.items()), cap=40) * series(dict(g.items()), cap=40)
    assert f * g == series(dict(full.items()))
    assert f * g == g * f
    assert f * (g + h) == f * g + f * h


@settings(max_examples=40, deadline=None)
@given(tables(size=30), tables(size=30))
def test_multiplication_kernels_agree(a, b):
    caps = (((0,), 3), ((1, 2), 4))
    sig = series({}).signature
    ref = _mul_python(a, b, sig, 7, caps) if a and b else {}
    if a and b:
        assert _mul_indexed(a, b, sig, 7, caps) == ref
        fa = {k: float(v) for k, v in a.items()}
        fb = {k: float(v) for k, v in b.items()}
        got = _mul_numpy(fa, fb, sig, 7, caps)
        for k in set(got) | set(ref):
            assert got.get(k, 0.0) == pytest.approx(float(ref.get(k, 0)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(tables(), tables())
def test_leibniz_rule_for_derivatives(a, b):
    f, g = series(a, cap=9), series(b, cap=9)
    lhs = (f * g).derive(1)
    rhs = f.derive(1) * g + f * g.derive(1)
    # truncation: compare below the cap where both sides are complete
    low = lambda s: s.select(lambda k: sum(abs(e) for e in k) < 8)
    assert low(lhs) == low(rhs)
