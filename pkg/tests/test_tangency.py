import math

import mpmath
import pytest

from tangency_lab.errors import ValidationError
from tangency_lab.tangency import (derivative_scaling_check, predicted_exponents, quadratic_tangency_model,
                                   solve_sweep, tangency_model, tangency_order_solver)


def _oracle_t_star(model, k, n, sigma, t_seed):
    """Independent route to t*: eliminate e = p(t), then the k+1 derivative
    conditions are linear in mu_0..mu_{k-1}; solvability of that overdetermined
    system is det = 0, solved by mpmath.findroot in 50 digits."""
    mf = mpmath.mpf
    with mpmath.workdps(50):
        sad, g = model.saddle, model.global_
        mun, lamn = mf(sad.mu) ** n, mf(sad.lam) ** n
        p = [mf(float(v)) for v in model.g_coeffs()]
        h2 = {ij: mf(v) for ij, v in g.H2.poly.terms().items()}

        def P(t):
            return mpmath.polyval(p[::-1], t)

        def det(t):
            e = P(t)

            def Y(s):
                return mun * (P(t + s) - e)

            def X(s):
                return lamn * (1 + t + s)

            cols = [mpmath.taylor(lambda s, i=i: Y(s) ** i, 0, k) for i in range(k)]
            cols.append(mpmath.taylor(
                lambda s: g.gamma * Y(s) ** k + sigma * X(s)
                + sum(v * X(s) ** i * Y(s) ** j for (i, j), v in h2.items()), 0, k))
            M = mpmath.matrix(k + 1, k + 1)
            for c, col in enumerate(cols):
                nrm = max(abs(v) for v in col) or 1
                for d in range(k + 1):
                    M[d, c] = col[d] / nrm
            return mpmath.det(M)

        return float(mpmath.findroot(det, mf(t_seed)))


@pytest.fixture(scope="module")
def sweeps():
    return {k: solve_sweep(tangency_model(k), k, range(8, 15)) for k in (2, 3)}


@pytest.mark.parametrize("k", [2, 3])
def test_solver_matches_independent_oracle(k, sweeps):
    for st in sweeps[k][::3]:
        t_ref = _oracle_t_star(st.model, k, st.n, st.sigma, st.seed["t_star"])
        assert st.t_star == pytest.approx(t_ref, rel=1e-9)


@pytest.mark.parametrize("k", [2, 3])
def test_solution_is_tangency(k, sweeps):
    for st in sweeps[k]:
        assert st.norm < 1e-8
        assert abs(st.certificates["d_k1"]) > 1e-6
        assert st.certificates["fd_rel"] <= 1e-6
        assert st.t_star > 0 and 0 < st.e < 1
        assert st.epsilon == pytest.approx(st.e + 2.0 ** -st.n)
        assert st.S == pytest.approx(2 * st.model.c * 2.0 ** st.n * st.t_star)


def test_sign_choice_frozen(sweeps):
    assert {st.sigma_sign for st in sweeps[2]} == {1}
    assert {st.sigma_sign for st in sweeps[3]} == {-1}
    st = [s for s in sweeps[3] if s.n == 10][0]
    assert st.t_star == pytest.approx(8.974203886e-7, rel=1e-8)
    assert st.certificates["d_k1"] == pytest.approx(0.2075, rel=1e-3)


def test_quadratic_closed_form():
    # no remainders: t^3 = sigma lam^n / (8 gamma a^2 mu^(2n)) is exact and Newton has nothing to do
    m = quadratic_tangency_model()
    for n in (6, 10, 14):
        st = tangency_order_solver(m, 2, n)
        ref = (0.01 ** n / (8 * 2.0 ** (2 * n))) ** (1 / 3)
        assert st.t_star == pytest.approx(ref, rel=1e-12)
        assert st.iterations == 0


@pytest.mark.parametrize("k", [2, 3])
def test_scaling_exponents(k, sweeps):
    rows = derivative_scaling_check(sweeps[k], tol=0.15)
    assert rows and all(r.ok for r in rows)
    for r in rows:
        if r.predicted is not None:
            assert abs(r.fitted_S - r.predicted[0]) < 1e-3
            assert abs(r.fitted_t - r.predicted[1]) < 1e-3


def test_predicted_exponents():
    assert predicted_exponents(1, 2) == ("zero", None)
    assert predicted_exponents(3, 2) == ("power", (2, -1))
    assert predicted_exponents(5, 2) == ("high", (2, -2))


def test_derivative_table_zero_entries(sweeps):
    st = sweeps[3][0]
    for (s, j), v in st.C.items():
        if s < j:
            assert v == 0.0
        else:
            assert v != 0.0


def test_solver_preconditions():
    with pytest.raises(ValidationError):
        tangency_order_solver(tangency_model(2), 1, 10)
    with pytest.raises(ValidationError):
        tangency_order_solver(tangency_model(2), 3, 10)
    with pytest.raises(ValidationError, match="shrinking"):
        tangency_order_solver(tangency_model(3, lam=0.5, mu=1.9), 3, 10)
    with pytest.raises(ValidationError):
        tangency_order_solver(tangency_model(2), 2, 0)
    with pytest.raises(ValidationError):
        derivative_scaling_check(solve_sweep(tangency_model(2), 2, [10]))


def test_state_serializes(sweeps):
    d = sweeps[2][0].to_dict()
    assert d["k"] == 2 and len(d["mu"]) == 2 and math.isfinite(d["norm"])
    assert d["trace"][-1] == d["norm"]
