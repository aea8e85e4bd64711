import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from tangency_lab import jets
from tangency_lab.errors import DomainError, OverflowGuardError, SchemaError, ValidationError
from tangency_lab.model_core import (BiPoly, Compose, GlobalMap, GlobalMapParams, Iterate, LimitMap,
                                     LocalMap, ModelDiffeo, PlanarPoint, RemainderPoly, SaddleParams,
                                     dumps_model, global_apply, global_eval, global_jacobian,
                                     is_at_least_r_shrinking, loads_model, local_iterate, return_map,
                                     saddle_exponent, saddle_report, validate_saddle)
from tangency_lab.renorm import desk_model

coord = st.floats(-0.9, 0.9, allow_nan=False)


def _fd_jacobian(f, x, y, h=1e-6):
    fx = (np.array(f(x + h, y)) - np.array(f(x - h, y))) / (2 * h)
    fy = (np.array(f(x, y + h)) - np.array(f(x, y - h))) / (2 * h)
    return np.column_stack([fx, fy])


# ---------------------------------------------------------------- saddle

def test_saddle_rejects_bad_multipliers():
    for lam, mu in [(0.0, 2.0), (1.0, 2.0), (0.5, 1.0), (0.5, 0.9), (math.nan, 2.0), (0.5, math.inf)]:
        with pytest.raises(ValidationError):
            SaddleParams(lam, mu)


def test_resonant_saddle_is_accepted_and_reported():
    s = SaddleParams(0.125, 2.0)
    rep = validate_saddle(s)
    assert rep.dissipative and not rep.nonresonant
    assert (1, 3) in rep.resonances
    with pytest.raises(ValidationError, match="resonance"):
        validate_saddle(s, require_nonresonant=True)


def test_non_dissipative_saddle_rejected():
    with pytest.raises(ValidationError, match="dissipative"):
        validate_saddle(SaddleParams(0.6, 2.0))


def test_saddle_exponent_value():
    s = SaddleParams(0.01, 2.0)
    assert saddle_exponent(s) == pytest.approx(math.log(100) / math.log(2), rel=1e-15)
    assert is_at_least_r_shrinking(s, 6.0) and not is_at_least_r_shrinking(s, 7.0)


@given(st.floats(1e-3, 0.99), st.floats(1.01, 50.0))
def test_exponent_identity(lam, mu):
    s = SaddleParams(lam, mu)
    assert mu ** (-s.rho) == pytest.approx(lam, rel=1e-12)
    assert saddle_report(s).dissipative == (lam * mu < 1)


# ---------------------------------------------------------------- polynomials

def test_bipoly_matches_sympy():
    x, y = sp.symbols("x y")
    terms = {(0, 0): 1.5, (2, 1): -0.25, (1, 3): 2.0, (3, 0): 0.5}
    P = BiPoly(terms)
    expr = sum(v * x ** i * y ** j for (i, j), v in terms.items())
    for xv, yv in [(0.3, -0.7), (-1.1, 0.4), (2.0, 2.0)]:
        assert P(xv, yv) == pytest.approx(float(expr.subs({x: xv, y: yv})), rel=1e-14)
        d = P.deriv(1, 2)
        assert d(xv, yv) == pytest.approx(float(sp.diff(expr, x, 1, y, 2).subs({x: xv, y: yv})), rel=1e-14)
    assert P.total_degree == 4
    assert P.deriv(4, 0) == BiPoly.zero()


def test_remainder_vanishing_orders():
    RemainderPoly.from_terms({(1, 1): 1.0, (0, 3): 1.0}, (1, 2))
    for bad in [{(0, 0): 1.0}, {(1, 0): 1.0}, {(0, 2): 1.0}]:
        with pytest.raises(ValidationError):
            RemainderPoly.from_terms(bad, (1, 2))


def test_global_params_checks():
    with pytest.raises(ValidationError):
        GlobalMapParams(alpha=0.0)
    with pytest.raises(ValidationError):
        GlobalMapParams(k=2, mu_vec=(0.1,))
    with pytest.raises(ValidationError):
        # y^2 term is below the order k = 3 demands in the second component
        GlobalMapParams(k=3, H2=RemainderPoly.from_terms({(0, 2): 1.0}, (1, 1)))


@settings(max_examples=60, deadline=None)
@given(coord, coord)
def test_global_jacobian_matches_finite_differences(x, y):
    g = desk_model(k=3).global_.with_mu((0.1, -0.2, 0.05))
    J = global_jacobian(g, x, y)
    Jfd = _fd_jacobian(lambda a, b: global_eval(g, a, b), x, y)
    assert np.allclose(J, Jfd, atol=1e-8)


def test_global_apply_domain():
    g = GlobalMapParams()
    with pytest.raises(DomainError) as ei:
        global_apply(g, PlanarPoint(1.5, 0.0))
    assert ei.value.stage == "global"


# ---------------------------------------------------------------- maps

def test_local_iterate_and_overflow_guard():
    s = SaddleParams(0.5, 2.0)
    p = local_iterate(s, PlanarPoint(1.0, 1.0), 3)
    assert (p.x, p.y) == (0.125, 8.0)
    with pytest.raises(OverflowGuardError):
        local_iterate(s, PlanarPoint(0.0, 1.0), 2000)
    assert local_iterate(s, PlanarPoint(1.0, 0.0), 2000).y == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.2, 0.8))
def test_return_map_chain_rule(x, y):
    m = desk_model()
    f = return_map(m, 1)
    J = f.jacobian(x, y)
    Jfd = _fd_jacobian(f.apply, x, y)
    assert np.allclose(J, Jfd, atol=1e-7)


def test_composition_order_and_iterate():
    A = LocalMap(SaddleParams(0.5, 2.0))
    L = LimitMap(2, (-2.0, 0.0))
    x, y = Compose(A, L).apply(0.3, 0.4)
    assert (x, y) == (0.8, 0.8 ** 2 - 2)
    assert Iterate(L, 3).apply(0.0, 0.5)[1] == pytest.approx(L.q(L.q(L.q(0.5))))
    with pytest.raises(ValidationError):
        Iterate(L, 0)


def test_jet_of_composition_matches_sympy():
    u, v = sp.symbols("u v")
    L = LimitMap(3, (0.2, -1.0, 0.5))
    f = Compose(L, L)
    x0, y0, K = 0.1, 0.3, 4
    jx, jy = f.jet(x0, y0, K)
    q = lambda t: t ** 3 + 0.5 * t ** 2 - t + 0.2
    ex = q(y0 + v)
    ey = q(q(y0 + v))
    for comp, expr in ((jx, ex), (jy, ey)):
        poly = sp.Poly(sp.expand(expr), u, v)
        for (i, j), c in zip(poly.monoms(), poly.coeffs()):
            if i + j <= K:
                assert comp[i, j] == pytest.approx(float(c), rel=1e-12, abs=1e-14)
    assert np.allclose(jets.linear_part((jx, jy)), f.jacobian(x0, y0))


def test_limit_map_validation():
    with pytest.raises(ValidationError):
        LimitMap(1, (0.0,))
    with pytest.raises(ValidationError):
        LimitMap(2, (0.0,))


def test_global_map_shift_and_box():
    m = desk_model()
    G = GlobalMap(m.global_, 1.0, shifted=True)
    xb, yb = G.apply(0.2, 1.0)
    xr, yr = global_eval(m.global_, 0.2, 0.0)
    assert xb == pytest.approx(xr + 1.0) and yb == pytest.approx(yr)
    with pytest.raises(DomainError):
        G.apply(0.2, 2.5)


# ---------------------------------------------------------------- serialization

def test_model_roundtrip():
    m = desk_model(k=3)
    m = ModelDiffeo(m.saddle, m.global_.with_mu((0.125, -1e-9, 3.0)), c=0.75, g=((3, 0.5),))
    assert loads_model(dumps_model(m)) == m


def test_model_config_errors():
    text = dumps_model(desk_model())
    with pytest.raises(SchemaError):
        loads_model(text + "bogus = 1\n")
    with pytest.raises(SchemaError):
        loads_model("\n".join(l for l in text.splitlines() if not l.startswith("gamma")))
