import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from tangency_lab.census import count_fixed_points_1d
from tangency_lab.errors import BudgetError, NonIsolatedError, ValidationError
from tangency_lab.poly1d import is_squarefree, iterate, to_poly
from tangency_lab.polymap import (HIST_EDGES, NONHYPERBOLIC_WITNESS, VectorPolynomial, bezout_check,
                                  iterate_compose, monomial_count, monte_carlo_hyperbolicity, multi_indices,
                                  multiplier_spectrum, periodic_points, power_map_certificate)

small = st.integers(-3, 3)


@given(st.integers(1, 4), st.integers(0, 5))
def test_monomial_count(N, D):
    idx = multi_indices(N, D)
    assert len(idx) == len(set(idx)) == monomial_count(N, D) == math.comb(N + D, N)
    assert [sum(a) for a in idx] == sorted(sum(a) for a in idx)


def test_vector_polynomial_validation():
    with pytest.raises(ValidationError):
        VectorPolynomial(1, 2, ((1, 2),))
    with pytest.raises(ValidationError):
        VectorPolynomial(0, 2, ())
    P = VectorPolynomial.from_1d([1, 0, 3])
    assert P.ascending() == [1, 0, 3] and P.true_degree() == 2 and P.n_coeffs == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(small, min_size=3, max_size=4), st.integers(1, 3), st.floats(-1, 1))
def test_compose_1d_matches_repeated_evaluation(c, k, z):
    assume(c[-1] != 0)
    P = VectorPolynomial.from_1d(c)
    Pk = iterate_compose(P, k)
    v = np.array([[z]], dtype=complex)
    for _ in range(k):
        v = P(v)
    got = Pk(np.array([[z]], dtype=complex))
    assert abs(got[0, 0] - v[0, 0]) <= 1e-9 * max(1.0, abs(v[0, 0]))
    assert all(isinstance(x, Fraction) for x in Pk.coeffs[0])


@settings(max_examples=15, deadline=None)
@given(st.lists(small, min_size=12, max_size=12), st.integers(1, 2),
       st.floats(-1, 1), st.floats(-1, 1))
def test_compose_2d_matches_repeated_evaluation(c, k, x, y):
    P = VectorPolynomial(2, 2, (tuple(c[:6]), tuple(c[6:])))
    Pk = iterate_compose(P, k)
    v = np.array([[x], [y]], dtype=complex)
    for _ in range(k):
        v = P(v)
    got = Pk(np.array([[x], [y]], dtype=complex))
    assert np.allclose(got, v, rtol=1e-10, atol=1e-10)


def test_compose_frozen_examples():
    assert iterate_compose(VectorPolynomial.from_1d([0, 0, 1]), 3).ascending() == [0] * 8 + [1]
    assert iterate_compose(VectorPolynomial.from_1d([-2, 0, 1]), 2).ascending() == [2, 0, -4, 0, 1]
    with pytest.raises(BudgetError):
        iterate_compose(VectorPolynomial.from_1d([0, 0, 1]), 13)
    with pytest.raises(BudgetError):
        iterate_compose(VectorPolynomial.power_map(2, 2), 4)


@settings(max_examples=25, deadline=None)
@given(st.lists(small, min_size=3, max_size=4), st.integers(1, 3))
def test_periodic_points_1d_complete_and_consistent(c, k):
    assume(c[-1] != 0)
    G = iterate(to_poly(c), k) - to_poly([0, 1])
    assume(is_squarefree(G))
    P = VectorPolynomial.from_1d(c)
    sols = periodic_points(P, k)
    D = len(c) - 1
    assert sols.complete and sols.count == D ** k == sols.bezout_cap
    v = np.array([[s[0] for s in sols.solutions]], dtype=complex)
    w = v.copy()
    for _ in range(k):
        w = P(w)
    assert np.all(np.abs(w - v) <= 1e-7 * np.maximum(1.0, np.abs(v)) ** (D ** k))
    rep = multiplier_spectrum(P, sols)
    for a, b in zip(rep.spectra, sols.multipliers):
        assert abs(a[0] - b[0]) <= 1e-6 * max(1.0, abs(b[0]))
    real = periodic_points(P, k, field="real")
    assert real.count == count_fixed_points_1d([float(x) for x in c], k)


def test_periodic_point_examples():
    sols = periodic_points(VectorPolynomial.power_map(1, 2), 2)
    assert sols.count == 4
    assert sorted(abs(m[0]) for m in sols.multipliers) == pytest.approx([0, 4, 4, 4])
    real = periodic_points(VectorPolynomial.from_1d([0, 0, 0, 1]), 1, field="real")
    assert sorted(s[0].real for s in real.solutions) == pytest.approx([-1, 0, 1], abs=1e-12)
    w = periodic_points(VectorPolynomial.from_1d(list(NONHYPERBOLIC_WITNESS[:3])), 1)
    assert sorted(round(m[0].real, 9) for m in w.multipliers) == [-1.0, 3.0]
    assert w.min_margin == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NonIsolatedError):
        periodic_points(VectorPolynomial.from_1d([0, 1]), 1)


def test_periodic_points_2d_power_map():
    P = VectorPolynomial.power_map(2, 2)
    sols = periodic_points(P, 1, seeds=2000)
    assert not sols.complete and sols.count == 4 == sols.bezout_cap
    assert bezout_check(P, 1)


def test_power_map_certificates():
    for D in (2, 3):
        for k in (1, 2, 3):
            cert = power_map_certificate(1, D, k)
            assert cert.ok and cert.count == D ** k
            assert cert.multiplier_moduli[0] == 0.0 and cert.multiplier_moduli[-1] == D ** k
    assert power_map_certificate(2, 2, 1).ok
    with pytest.raises(BudgetError):
        power_map_certificate(3, 3, 3)
    with pytest.raises(ValidationError):
        power_map_certificate(1, 1, 2)


# ---------------------------------------------------------------- Monte Carlo

def test_monte_carlo_deterministic_and_order_free():
    a = monte_carlo_hyperbolicity(samples=30, seed=11)
    b = monte_carlo_hyperbolicity(samples=30, seed=11)
    c = monte_carlo_hyperbolicity(samples=10, seed=11)
    d = monte_carlo_hyperbolicity(samples=10, seed=12)
    assert a == b and a.to_dict() == b.to_dict()
    assert a.margins[:10] == c.margins
    assert d.margins != c.margins


def test_monte_carlo_witness_and_outputs():
    st_ = monte_carlo_hyperbolicity(samples=20, seed=3, witness=NONHYPERBOLIC_WITNESS)
    assert st_.witness_index == 20 and st_.flagged == (20,)
    d = st_.to_dict()
    assert set(d) >= {"flagged", "min_margin", "histogram", "flagged_indices", "degenerate_indices",
                      "witness_index"}
    assert sum(d["histogram"].values()) == 21
    assert len(d["histogram"]) == len(HIST_EDGES) - 1
    lines = st_.margins_csv().splitlines()
    assert lines[0] == "sample,margin,flagged" and lines[-1].endswith(",1")


def test_monte_carlo_degenerate_sample():
    # z + z^2 has a double fixed point at 0: non-square-free, margin 0
    st_ = monte_carlo_hyperbolicity(samples=0, witness=(0.0, 1.0, 1.0, 0.0))
    assert st_.degenerate == (0,) and st_.margins == (0.0,)


def test_monte_carlo_validation():
    with pytest.raises(ValidationError):
        monte_carlo_hyperbolicity(N=2, samples=1)
    with pytest.raises(BudgetError):
        monte_carlo_hyperbolicity(D=3, k_max=8, samples=1)
    with pytest.raises(ValidationError):
        monte_carlo_hyperbolicity(samples=1, witness=(0, 0, 0, 0, 1))
