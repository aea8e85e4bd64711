import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import assume, given, settings, strategies as st

from tangency_lab.census import (DEGENERATE, FLAT, HYPERBOLIC, OTHER, Census, Poly1DMap, SearchSpec,
                                 classify, count_fixed_points_1d, count_Pn, fixed_points_1d, growth_rate,
                                 jet_1d, lift_limit_records, periodic_points_2d, split_degenerate,
                                 splitting_profile, zeta_partial)
from tangency_lab.errors import BudgetError, NonIsolatedError, ValidationError
from tangency_lab.model_core import LimitMap, LocalMap, PlanarMap, SaddleParams
from tangency_lab.poly1d import iterate, is_squarefree, sturm_count, to_poly

CHEB = [-2.0, 0.0, 1.0]


def _chebyshev_periodic_points(n: int) -> list[float]:
    # q(2cos t) = 2cos 2t, so q^n fixes 2cos t iff 2^n t = +-t mod 2 pi
    vals = [2 * math.cos(2 * math.pi * j / (2 ** n - 1)) for j in range(2 ** n - 1)]
    vals += [2 * math.cos(2 * math.pi * j / (2 ** n + 1)) for j in range(2 ** n + 1)]
    vals.sort()
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > 1e-12:
            out.append(v)
    return out


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_chebyshev_points_closed_form(n):
    recs = fixed_points_1d(CHEB, n)
    got = [r.point[0] for r in recs]
    ref = _chebyshev_periodic_points(n)
    assert len(got) == len(ref) == 2 ** n
    assert np.allclose(got, ref, atol=1e-9)
    for r in recs:
        # multiplier of q^n at 2cos t is 2^n sin(2^n t)/sin t, modulus >= 2^n away from the ends
        assert abs(r.multipliers[0]) >= 2 ** n - 1e-6
        assert r.classification == HYPERBOLIC
        assert n % r.least_period == 0


def test_least_periods_chebyshev():
    recs = fixed_points_1d(CHEB, 2)
    assert sorted(r.least_period for r in recs) == [1, 1, 2, 2]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=1, max_size=5, unique=True), st.integers(0, 1))
def test_sturm_count_matches_constructed_roots(roots, pairs):
    """q(y) = y + prod(y - r) * (y^2 + 1)^pairs has exactly len(roots) fixed points."""
    G = [Fraction(1)]
    for r in roots:
        G = list(np.polynomial.polynomial.polymul(G, [-r, 1]))
    for _ in range(pairs):
        G = list(np.polynomial.polynomial.polymul(G, [1, 0, 1]))
    assume(len(G) >= 3)
    q = [float(c) for c in G]
    q[1] += 1.0
    assert count_fixed_points_1d(q, 1) == len(roots)
    got = [r.point[0] for r in fixed_points_1d(q, 1)]
    assert np.allclose(got, sorted(roots), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=5))
def test_sturm_count_matches_sympy(coeffs):
    assume(coeffs[-1] != 0)
    p = to_poly(coeffs)
    assume(is_squarefree(p))
    y = sp.symbols("y")
    expr = sum(c * y ** i for i, c in enumerate(coeffs))
    assert sturm_count(p) == len(sp.real_roots(sp.Poly(expr, y)))


def test_iterate_budget_and_degree():
    q = to_poly([0, 0, 1])
    assert iterate(q, 3).degree() == 8
    with pytest.raises(BudgetError):
        iterate(q, 13)


def test_non_isolated_points():
    with pytest.raises(NonIsolatedError):
        fixed_points_1d([0.0, 1.0], 1)
    with pytest.raises(NonIsolatedError):
        fixed_points_1d([0.0, 1.0, 1.0], 1)      # y + y^2 has a double fixed point
    with pytest.raises(NonIsolatedError):
        fixed_points_1d([0.0, -1.0], 2)           # y -> -y squares to the identity


def test_degenerate_point_classified_from_jet():
    # a multiplier-1 fixed point is a multiple root of q(y) - y, so the exact
    # route refuses it and classification goes through the jet
    q = [0.0, 1.0, 0.0, -1.0]
    with pytest.raises(NonIsolatedError):
        fixed_points_1d(q, 1)
    cls, k, l = classify([1.0], jet_1d(q, 1, 0.0, 6))
    assert (cls, k) == (DEGENERATE, 2) and l[1] == -1.0
    cls, k, _ = classify([1.0], jet_1d(q, 2, 0.0, 6))
    assert (cls, k) == (DEGENERATE, 2)


def test_classify_cases():
    assert classify([0.5, 3.0])[0] == HYPERBOLIC
    assert classify([-1.0])[0] == OTHER
    assert classify([1.0, 1.0], jet=np.zeros(7))[0] == OTHER
    assert classify([complex(0, 1)])[0] == OTHER
    assert classify([1.0], jet=[0.0, 1.0, 0.0, 0.0, 2.0, 0, 0]) == (DEGENERATE, 3, (0.0, 0.0, 2.0, 0.0, 0.0))
    assert classify([1.0], jet=[0.0, 1.0] + [0.0] * 5)[0] == FLAT
    with pytest.raises(ValidationError):
        classify([1.0])


class _CenterExample(PlanarMap):
    """(x, y) -> (x/2 + y^2, y + x y + y^3): center manifold x = 2y^2 + ...,
    restricted map y + 3y^3 + ... (hand computation)."""

    def apply(self, x, y):
        return 0.5 * x + y ** 2, y + x * y + y ** 3

    def jacobian(self, x, y):
        return np.array([[0.5, 2 * y], [y, 1 + x + 3 * y ** 2]])

    def jet(self, x, y, K):
        jx = np.zeros((K + 1, K + 1))
        jy = np.zeros((K + 1, K + 1))
        jx[1, 0], jx[0, 2] = 0.5, 1.0
        jy[0, 1], jy[1, 1], jy[0, 3] = 1.0, 1.0, 1.0
        return jx, jy


def test_center_manifold_reduction():
    cls, k, l = classify([0.5, 1.0], _CenterExample().jet(0, 0, 6))
    assert cls == DEGENERATE and k == 2
    assert l[0] == pytest.approx(0.0, abs=1e-12) and l[1] == pytest.approx(3.0, rel=1e-12)


def test_jet_1d_matches_sympy():
    y = sp.symbols("y")
    q = lambda t: t ** 2 - 2 + sp.Rational(1, 3) * t
    expr = sp.expand(q(q(y + sp.Rational(1, 2))))
    ref = [float(expr.coeff(y, i)) for i in range(5)]
    got = jet_1d([-2.0, 1 / 3, 1.0], 2, 0.5, 4)
    assert np.allclose(got, ref, rtol=1e-13)


# ---------------------------------------------------------------- counts, zeta

def test_count_Pn_limit_map_lifts():
    L = LimitMap(2, (-2.0, 0.0))
    c = count_Pn(L, 4)
    assert [c.table[n] for n in range(1, 5)] == [2, 4, 8, 16]
    for r in c.orbits[3]:
        x, y = r.point
        fx, fy = x, y
        for _ in range(3):
            fx, fy = L.apply(fx, fy)
        assert abs(fx - x) < 1e-8 and abs(fy - y) < 1e-8
        assert r.multipliers[0] == 0.0


def test_limit_fixed_point_multipliers():
    # (x, y) -> (y, y^2 - 2) at (2, 2): jacobian [[0, 1], [0, 4]]
    L = LimitMap(2, (-2.0, 0.0))
    recs = lift_limit_records(L, fixed_points_1d(L.coeffs(), 1))
    at2 = [r for r in recs if abs(r.point[1] - 2.0) < 1e-12]
    assert len(at2) == 1 and at2[0].point == pytest.approx((2.0, 2.0))
    assert sorted(abs(m) for m in at2[0].multipliers) == pytest.approx([0.0, 4.0])
    assert np.allclose(L.jacobian(2.0, 2.0), [[0, 1], [0, 4]])

def test_planar_newton_agrees_with_exact_route():
    L = LimitMap(2, (-2.0, 0.0))
    spec = SearchSpec(box=(-2.2, 2.2, -2.2, 2.2), seeds=31)
    for n in (1, 2):
        newton = periodic_points_2d(L, n, spec)
        exact = lift_limit_records(L, fixed_points_1d(L.coeffs(), n))
        assert len(newton) == len(exact) == 2 ** n
        a = sorted(r.point for r in newton)
        b = sorted(r.point for r in exact)
        assert np.allclose(a, b, atol=1e-8)


def test_planar_newton_linear_saddle():
    recs = periodic_points_2d(LocalMap(SaddleParams(0.5, 3.0)), 1, SearchSpec(box=(-1, 1, -1, 1), seeds=5))
    assert len(recs) == 1 and recs[0].point == (0.0, 0.0)
    assert recs[0].multipliers == (0.5, 3.0)


def test_planar_newton_non_isolated():
    class Shear(PlanarMap):
        def apply(self, x, y):
            return x, y + 0.0 * x

        def jacobian(self, x, y):
            return np.eye(2)

    with pytest.raises(NonIsolatedError):
        periodic_points_2d(Shear(), 1, SearchSpec(box=(-1, 1, -1, 1), seeds=3))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=6))
def test_zeta_recurrence_matches_sympy(counts):
    z = sp.symbols("z")
    T = len(counts)
    expr = sp.exp(sum(sp.Rational(c, n + 1) * z ** (n + 1) for n, c in enumerate(counts)))
    ser = sp.series(expr, z, 0, T + 1).removeO()
    ref = [sp.Rational(ser.coeff(z, i)) for i in range(T + 1)]
    got = zeta_partial(counts, T).coeffs
    assert [Fraction(int(r.p), int(r.q)) for r in ref] == list(got)


def test_zeta_integrality_for_realisable_counts():
    got = zeta_partial(count_Pn(Poly1DMap(CHEB), 6), 6).coeffs
    assert all(c.denominator == 1 for c in got)
    assert list(got) == [2 ** i for i in range(7)]


def test_zeta_and_growth_errors():
    with pytest.raises(ValidationError):
        zeta_partial([1, 2], 3)
    with pytest.raises(ValidationError):
        growth_rate([0, 0])
    with pytest.raises(ValidationError):
        Census({1: -1}, 1)
    g = growth_rate({1: 1, 2: 9, 3: 10})
    assert g.argmax == 2 and g.value == pytest.approx(math.log(3)) and g.window == (1, 3)


# ---------------------------------------------------------------- splitting

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.data())
def test_split_degenerate_properties(k, data):
    m = data.draw(st.sampled_from([m for m in range(1, k + 2) if (k + 1 - m) % 2 == 0]))
    probe = split_degenerate(k, 1e-3, m=m)
    eps = data.draw(st.floats(1e-3, 1.0)) * min(1.0, 0.9 * probe.eps_max)
    res = split_degenerate(k, eps, m=m)
    assert len(res.records) == m
    # independent route: exact count and multipliers of the perturbed polynomial
    full = np.zeros(k + 2)
    full[1] = 1.0
    full[k + 1] += 1.0
    full[: k + 1] -= eps * np.array(res.q_coeffs)
    exact = fixed_points_1d(list(full), 1)
    assert len(exact) == m
    for a, b in zip(exact, res.records):
        assert a.point[0] == pytest.approx(b.point[0], abs=1e-9 * max(1.0, res.scale))
        assert a.multipliers[0] == pytest.approx(b.multipliers[0], abs=1e-9)
        assert b.classification == HYPERBOLIC and -1.0 < b.multipliers[0] != 1.0
    assert res.margin == pytest.approx(min(r.margin for r in res.records))


def test_split_frozen_values():
    r = split_degenerate(5, 0.2, m=6)
    assert r.scale == pytest.approx(0.37798, rel=1e-4)
    assert r.eps_max == pytest.approx(1.70, rel=1e-2)
    assert r.margin == pytest.approx(9.478e-4, rel=1e-3)


def test_split_errors():
    with pytest.raises(ValidationError, match="k >="):
        splitting_profile(2, [-1.0, -0.5, 0.5, 1.0])
    with pytest.raises(ValidationError, match="even"):
        splitting_profile(3, [-1.0, 0.0, 1.0])
    with pytest.raises(ValidationError):
        split_degenerate(2, 10.0, m=3)
    with pytest.raises(ValidationError):
        split_degenerate(2, 0.1, roots=[0.0, 0.0, 0.5])
    zero = split_degenerate(3, 0.0)
    assert zero.records[0].classification == DEGENERATE and zero.records[0].k == 3
