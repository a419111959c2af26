from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from echelon.cli import demo_torus
from echelon.errors import FrequencyDriftError, PreconditionError, ResonanceError
from echelon.kam import (
    average,
    frequency_hamiltonian,
    homological_inverse,
    isochronic_check,
    kam_transversal_step,
    make_hamiltonian,
    mixed_scale,
    poisson_bracket,
    singular_in_F,
    singular_kam_step,
    t_multiplication_bound,
    torus_in_F,
)
from echelon.normal_form import Schedule
from echelon.numbers import parse_number
from echelon.series import ORDER_INFINITY, TruncatedSeries

from oracles import homological_torus

PHI = parse_number("(1+sqrt(5))/2", exact=True)
LAM = (1, PHI)

small = st.fractions(min_value=-3, max_value=3, max_denominator=4)
fourier = st.tuples(st.integers(-1, 1), st.integers(-1, 1))
action = st.sampled_from([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)])


def wide(terms):
    # caps large enough that nested brackets never truncate
    return make_hamiltonian(2, terms, fourier_cap=6, xi_cap=6, exact=True)


hams = st.dictionaries(st.tuples(fourier, action), small, max_size=5).map(wide)


@settings(max_examples=40, deadline=None)
@given(hams, hams)
def test_bracket_is_antisymmetric(f, g):
    assert poisson_bracket(f, g) == -poisson_bracket(g, f)


@settings(max_examples=25, deadline=None)
@given(hams, hams, hams)
def test_bracket_jacobi_identity(f, g, h):
    cyc = (poisson_bracket(f, poisson_bracket(g, h)) + poisson_bracket(g, poisson_bracket(h, f))
           + poisson_bracket(h, poisson_bracket(f, g)))
    assert cyc.is_zero


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(-4, 4), st.integers(-4, 4)))
def test_modes_are_eigenvectors_of_frequency(i):
    e = make_hamiltonian(2, {(i, (0, 0)): 1}, fourier_cap=8, xi_cap=2, exact=True)
    got = poisson_bracket(e, frequency_hamiltonian(LAM, e))
    assert got == e.scale(i[0] * LAM[0] + i[1] * LAM[1])


def test_average_is_projector_commuting_with_t():
    H = demo_torus(4)
    A = average(H)
    assert average(A) == A
    assert all(not any(k[:2]) for k in A)
    t = make_hamiltonian(2, {((0, 0), (0, 0), 1): 1}, fourier_cap=4, xi_cap=1, t_cap=4)
    assert average(t * H) == t * A


def test_isochronic_linear_frequency_is_degenerate():
    H0 = make_hamiltonian(2, {((0, 0), (1, 0)): 1, ((0, 0), (0, 1)): PHI}, fourier_cap=2, xi_cap=2)
    rep = isochronic_check(H0)
    assert rep["degenerate"] and rep["fiber_dim"] == 2 and rep["lambda"] == LAM


@pytest.mark.parametrize("n", [1, 2, 3])
def test_isochronic_half_square_sum(n):
    terms = {(tuple([0] * n), tuple(2 * (k == j) for k in range(n))): Fraction(1, 2) for j in range(n)}
    rep = isochronic_check(make_hamiltonian(n, terms, fourier_cap=1, xi_cap=2))
    assert rep["det"] == Fraction(1, 2 ** n) and not rep["degenerate"] and rep["fiber_dim"] == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=3), st.integers(-5, 5))
def test_isochronic_determinant_matches_sympy(diag, off):
    terms = {((0, 0), (2, 0)): diag[0], ((0, 0), (0, 2)): diag[1], ((0, 0), (1, 1)): off}
    rep = isochronic_check(make_hamiltonian(2, terms, fourier_cap=1, xi_cap=2))
    ref = sp.Matrix([[diag[0], sp.Rational(off, 2)], [sp.Rational(off, 2), diag[1]]])
    assert rep["det"] == Fraction(str(ref.det()))
    assert rep["degenerate"] is (ref.det() == 0)


def test_isochronic_refuses_angles():
    with pytest.raises(PreconditionError):
        isochronic_check(make_hamiltonian(1, {((1,), (0,)): 1}, fourier_cap=1, xi_cap=1))


def mk(terms):
    return make_hamiltonian(2, terms, fourier_cap=4, xi_cap=2, t_cap=3, exact=True)


def test_homological_inverse_at_frequency():
    j = homological_inverse(mk({}), LAM)
    h, f = j(mk({((1, 0), (0, 0), 0): 1}))
    assert h == mk({((1, 0), (0, 0), 0): 1}) and f.is_zero
    h, f = j(mk({((0, 0), (0, 0), 0): 5}))
    assert h.is_zero and f == mk({((0, 0), (0, 0), 0): 5})


def test_homological_inverse_rebased():
    alpha = mk({((0, 0), (1, 0), 1): 1, ((0, 0), (2, 0), 0): Fraction(1, 2)})
    j = homological_inverse(alpha, LAM)
    r = mk({((1, 0), (0, 0), 0): 1, ((0, 1), (1, 0), 1): 2})
    h, f = j(r)
    base = frequency_hamiltonian(LAM, alpha) + alpha
    assert (poisson_bracket(h, base) + f - r).is_zero
    assert all(torus_in_F(k, 2) for k in f)
    assert h[(1, 0, 0, 0, 1)] == -1 and h[(0, 1, 1, 0, 1)] == 2 / PHI


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.tuples(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), st.sampled_from([(0, 0), (1, 0), (0, 1)])),
                       small, max_size=6))
def test_homological_inverse_matches_sympy(table):
    table = {k: v for k, v in table.items() if 0 < abs(k[0][0]) + abs(k[0][1]) <= 4}
    r = mk({(i, beta, 0): c for (i, beta), c in table.items()})
    h, f = homological_inverse(mk({}), LAM)(r)
    assert f.is_zero
    oracle = homological_torus(table, [1, (1 + sp.sqrt(5)) / 2])
    for (i, beta), want in oracle.items():
        assert sp.simplify(sp.sympify(str(h[i + beta + (0,)])) - want) == 0


def test_homological_inverse_resonance():
    with pytest.raises(ResonanceError):
        homological_inverse(mk({}), (1, 1))


def test_zero_perturbation_is_fixed():
    H = mk({((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): PHI})
    res = kam_transversal_step(H, 3)
    assert len(res.trace) == 0 and res.alpha_total.is_zero and res.element.is_identity


def test_single_mode_one_degree_of_freedom():
    H = make_hamiltonian(1, {((0,), (1,), 0): 1, ((1,), (0,), 1): 1, ((-1,), (0,), 1): 1},
                         fourier_cap=4, xi_cap=1, t_cap=4)
    res = kam_transversal_step(H, 1, real=True)
    assert res.trace.grades()[0] >= 2
    assert res.corrections[0] == make_hamiltonian(1, {((1,), (0,), 1): 1, ((-1,), (0,), 1): -1},
                                                  fourier_cap=4, xi_cap=1, t_cap=4)


def test_demo_torus_grades_and_reality():
    H = demo_torus(8)
    res = kam_transversal_step(H, 3, real=True)
    assert res.trace.grades() == [2, 5, ORDER_INFINITY]
    assert all(res.trace.annotations["reality"].values())
    assert res.trace.lemma_violations() == []
    assert all(torus_in_F(k, 2) for k in res.alpha_total)
    assert all(k[4] >= 1 for k in res.alpha_total)
    lam = frequency_hamiltonian(LAM, H)
    assert res.element(H) == lam + res.alpha_total + res.residual


def test_alpha_total_is_schedule_independent():
    H = demo_torus(6)
    runs = [kam_transversal_step(H, 3, sched=s) for s in
            (None, Schedule(0.1, "halving"), Schedule(0.05, "custom", sigmas=(0.0, 0.01, 0.02), s0=0.2, c=3))]
    assert runs[0].alpha_total == runs[1].alpha_total == runs[2].alpha_total


def test_frequency_drift_rejected():
    H = mk({((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): PHI, ((0, 0), (1, 0), 1): 1})
    with pytest.raises(FrequencyDriftError):
        kam_transversal_step(H, 1)


def test_untransversal_t_free_term_rejected():
    H = mk({((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): PHI, ((1, 0), (0, 0), 0): 1})
    with pytest.raises(PreconditionError):
        kam_transversal_step(H, 1)


def test_reality_required_when_requested():
    H = mk({((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): PHI, ((1, 0), (0, 0), 1): 1})
    with pytest.raises(PreconditionError):
        kam_transversal_step(H, 1, real=True)


def test_resonant_frequency_rejected():
    H = mk({((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): 1, ((1, 0), (0, 0), 1): 1})
    with pytest.raises(ResonanceError):
        kam_transversal_step(H, 1)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.tuples(fourier, st.sampled_from([(0, 0), (1, 0)]), st.integers(0, 3)), small, min_size=1,
                       max_size=6), st.floats(0.05, 0.9))
def test_t_multiplication_is_bounded_by_s_squared(table, s):
    f = mk(table).to_float()
    assert t_multiplication_bound(mixed_scale(2), s, [f], 4) <= s * s * (1 + 1e-12)


# singular case

def qp(cap):
    sig = (0, 2)
    return TruncatedSeries.variable(sig, cap, 0, exact=True), TruncatedSeries.variable(sig, cap, 1, exact=True)


def test_singular_cubic_is_one_step():
    q, p = qp(10)
    res = singular_kam_step(q * p * Fraction(3, 2) + q ** 3, 4)
    assert len(res.corrections) == 1
    assert res.corrections[0] == q ** 3 * Fraction(2, 9)
    assert res.residual.is_zero and res.alpha_total.is_zero


def test_singular_residual_reaches_I_squared():
    q, p = qp(12)
    res = singular_kam_step(q * p + q ** 3 + q * q * p + p ** 3, 4)
    assert res.trace.grades() == [4, 6, 11, ORDER_INFINITY]
    assert all(singular_in_F(k, 1) for k in res.residual)
    assert all(singular_in_F(k, 1) for k in res.alpha_total)
    assert res.trace.lemma_violations() == []


def test_singular_resonance():
    sig = (0, 4)
    v = [TruncatedSeries.variable(sig, 6, k, exact=True) for k in range(4)]
    with pytest.raises(ResonanceError):
        singular_kam_step(v[0] * v[2] + v[1] * v[3] + v[0] ** 2 * v[3] ** 2, 2)


def test_singular_bad_quadratic_part():
    q, p = qp(6)
    with pytest.raises(PreconditionError):
        singular_kam_step(q * q + q ** 3, 1)


def test_singular_in_F_membership():
    assert singular_in_F((2, 2), 1) and not singular_in_F((3, 1), 1)
    assert singular_in_F((1, 1, 1, 1), 2)
