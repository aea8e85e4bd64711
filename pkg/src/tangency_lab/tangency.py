"""Newton solver for a k-th order homoclinic tangency of the unfolded model.

The unstable tongue is pushed down to ybar = p(t) - eps with p(t) = c t^2 + g(t),
iterated n times by the saddle and once by the unfolded global map.  Writing
e = eps - mu^-n, the second coordinate before the global map is
Y(t) = mu^n (p(t) - e), and we look for (e, t*, mu_0..mu_{k-1}) with

    Y(t*) = 0,   yhat(t*) = yhat'(t*) = ... = yhat^(k)(t*) = 0.

Everything is evaluated as a Taylor series in s = t - t*, so derivative
conditions are coefficient conditions.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from math import comb, factorial

import mpmath
import numpy as np

from .errors import CertificateError, ConvergenceError, ValidationError
from .jets import taylor_shift_1d
from .model_core import GlobalMapParams, ModelDiffeo, SaddleParams
from .renorm import desk_model

RESIDUAL_TOL = 1e-8
CERT_MIN = 1e-6
FD_TOL = 1e-6


# ------------------------------------------------------------ series helpers

def _smul(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    return np.convolve(a, b)[: K + 1]


def _spow(a: np.ndarray, m: int, K: int) -> np.ndarray:
    out = np.zeros(K + 1)
    out[0] = 1.0
    for _ in range(m):
        out = _smul(out, a, K)
    return out


def _bipoly_series(terms: dict, X: np.ndarray, Y: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros(K + 1)
    for (i, j), v in terms.items():
        out += v * _smul(_spow(X, i, K), _spow(Y, j, K), K)
    return out


@dataclass(frozen=True)
class _Series:
    Y: np.ndarray
    X: np.ndarray
    yhat: np.ndarray
    xhat: np.ndarray
    dyhat_dY: np.ndarray
    Ypow: tuple[np.ndarray, ...]
    yscale: np.ndarray


def _series(model: ModelDiffeo, k: int, n: int, e: float, t: float, mu_vec, sigma: float, K: int) -> _Series:
    s, g = model.saddle, model.global_
    mun, lamn = s.mu ** n, s.lam ** n
    P = taylor_shift_1d(model.g_coeffs(), t, K)
    P[0] -= e
    Y = mun * P
    X = np.zeros(K + 1)
    X[0], X[1] = lamn * (1.0 + t), lamn
    Ypow = tuple(_spow(Y, i, K) for i in range(k + 1))
    h2 = g.H2.poly
    H2 = _bipoly_series(h2.terms(), X, Y, K)
    dH2 = _bipoly_series(h2.deriv(0, 1).terms(), X, Y, K)
    parts = [g.gamma * Ypow[k]] + [m * Ypow[i] for i, m in enumerate(mu_vec)] + [sigma * X, H2]
    yhat = np.sum(parts, axis=0)
    yscale = np.sum(np.abs(parts), axis=0)
    dY = k * g.gamma * Ypow[k - 1] + dH2
    for i in range(1, k):
        dY = dY + i * mu_vec[i] * Ypow[i - 1]
    xhat = g.alpha * Y + g.beta * X + _bipoly_series(g.H1.poly.terms(), X, Y, K)
    return _Series(Y, X, yhat, xhat, dY, Ypow, yscale)


def _residuals(model, k, n, e, t, mu_vec, sigma, K):
    """Raw residuals, their scales and the Jacobian in (e, t, mu_0..mu_{k-1})."""
    mun = model.saddle.mu ** n
    p = model.g_coeffs()
    sr = _series(model, k, n, e, t, mu_vec, sigma, K)
    r = np.empty(k + 2)
    sc = np.empty(k + 2)
    J = np.zeros((k + 2, k + 2))
    r[0] = sr.Y[0]
    pt = float(np.polynomial.polynomial.polyval(t, p))
    sc[0] = mun * (abs(pt) + abs(e))
    J[0, 0], J[0, 1] = -mun, sr.Y[1]
    dyde = _smul(sr.dyhat_dY, np.full(1, -mun), K)
    for d in range(k + 1):
        r[d + 1] = sr.yhat[d]
        sc[d + 1] = sr.yscale[d]
        J[d + 1, 0] = dyde[d]
        J[d + 1, 1] = (d + 1) * sr.yhat[d + 1]
        for i in range(k):
            J[d + 1, 2 + i] = sr.Ypow[i][d]
    sc = np.where(sc > 0, sc, 1.0)
    return r, sc, J, sr


# ------------------------------------------------------------ seeds

def _seed(model: ModelDiffeo, k: int, n: int, sigma: float):
    """Leading-order asymptotics for (e, t*, mu).

    mu_1..mu_{k-1} follow from the derivative conditions of orders 1..k-1,
    and the order-k condition fixes t* through t^(2k-1) = -B / A.
    """
    s, g = model.saddle, model.global_
    a = model.c
    mun, lamn = s.mu ** n, s.lam ** n

    def Cmi(m, i, t):
        S = 2.0 * a * mun * t
        return factorial(m) * comb(i, m - i) * S ** i * (2.0 * t) ** (i - m)

    def mus(t):
        mv = [0.0] * k
        if k >= 2:
            mv[1] = -sigma * lamn / (2.0 * a * mun * t)
        for m in range(2, k):
            mv[m] = -sum(mv[i] * Cmi(m, i, t) for i in range(1, m)) / Cmi(m, m, t)
        return mv

    t_ref = (s.lam * s.mu ** (-k)) ** (n / (2 * k - 1))
    mv = mus(t_ref)
    B = sum(mv[i] * Cmi(k, i, t_ref) for i in range(1, k)) * t_ref ** (k - 1)
    if B == 0.0:
        raise ValidationError("leading-order coefficient D_k vanishes: no seed (is sigma zero?)")
    A = g.gamma * factorial(k) * (2.0 * a * mun) ** k
    q = -B / A
    t0 = math.copysign(abs(q) ** (1.0 / (2 * k - 1)), q)
    mv = mus(t0)
    mv[0] = -sigma * lamn * (1.0 + t0)
    e0 = float(np.polynomial.polynomial.polyval(t0, model.g_coeffs()))
    return e0, t0, mv, t_ref


# ------------------------------------------------------------ state

@dataclass(frozen=True)
class TangencySolveState:
    """Converged tangency parameters with residuals and certificates."""

    model: ModelDiffeo
    k: int
    n: int
    epsilon: float
    e: float
    t_star: float
    mu_vec: tuple[float, ...]
    sigma_sign: int
    S: float
    residuals: tuple[float, ...]
    scaled_residuals: tuple[float, ...]
    norm: float
    iterations: int
    trace: tuple[float, ...]
    certificates: dict = field(default_factory=dict)
    C: dict = field(default_factory=dict)
    seed: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        return self.sigma_sign * self.model.global_.sigma

    def to_dict(self) -> dict:
        return {
            "k": self.k, "n": self.n, "epsilon": self.epsilon, "e": self.e,
            "t_star": self.t_star, "mu": list(self.mu_vec), "sigma_sign": self.sigma_sign,
            "S": self.S, "residuals": list(self.residuals),
            "scaled_residuals": list(self.scaled_residuals), "norm": self.norm,
            "iterations": self.iterations, "trace": list(self.trace),
            "certificates": dict(self.certificates),
        }


def _derivative_table(Y: np.ndarray, k: int) -> dict[tuple[int, int], float]:
    """C[(s, j)] = d^s (Y^j) / dt^s at t*, with Y(t*) = 0 imposed exactly."""
    K = len(Y) - 1
    Y0 = Y.copy()
    Y0[0] = 0.0
    out = {}
    for j in range(1, k + 1):
        Yj = _spow(Y0, j, K)
        for s_ in range(1, k + 1):
            out[(s_, j)] = float(factorial(s_) * Yj[s_])
    return out


def _fd_recheck(model, k, n, e, t, mu_vec, sigma, scales) -> dict:
    """Residuals re-derived by mpmath finite differences at steps h and h/2."""
    s, g = model.saddle, model.global_
    with mpmath.workdps(60):
        mf = mpmath.mpf
        mun = mf(s.mu) ** n
        lamn = mf(s.lam) ** n
        p = [mf(float(v)) for v in model.g_coeffs()]
        mv = [mf(v) for v in mu_vec]
        h1 = g.H2.poly.terms()

        def yhat(tt):
            Y = mun * (mpmath.polyval(p[::-1], tt) - mf(e))
            X = lamn * (1 + tt)
            acc = mf(g.gamma) * Y ** k + mf(sigma) * X
            for i, m in enumerate(mv):
                acc += m * Y ** i
            for (i, j), v in h1.items():
                acc += mf(v) * X ** i * Y ** j
            return acc

        t0 = mf(t)
        h = abs(t0) * mf("1e-5")
        out_abs, out_rel = [], []
        for d in range(k + 1):
            if d == 0:
                a1 = a2 = yhat(t0)
            else:
                a1 = mpmath.diff(yhat, t0, d, h=h)
                a2 = mpmath.diff(yhat, t0, d, h=h / 2)
            out_abs.append(float(abs(a1 - a2)))
            out_rel.append(float(abs(a1 - a2) / (factorial(d) * mf(scales[d + 1]))))
        return {"fd_abs": max(out_abs), "fd_rel": max(out_rel)}


# ------------------------------------------------------------ solver

def _newton(model, k, n, sigma, seed, max_newton, K):
    e0, t0, mv0, _ = seed
    sgn = 1.0 if t0 > 0 else -1.0
    msc = np.array([abs(v) if v != 0.0 else 1.0 for v in mv0])
    z = np.concatenate([[math.log(e0), math.log(abs(t0))], np.array(mv0) / msc])

    def unpack(z):
        return math.exp(z[0]), sgn * math.exp(z[1]), tuple(z[2:] * msc)

    def evaluate(z):
        e, t, mv = unpack(z)
        r, sc, J, sr = _residuals(model, k, n, e, t, mv, sigma, K)
        return r / sc, r, sc, J, sr

    rs, r, sc, J, sr = evaluate(z)
    norm = float(np.linalg.norm(rs))
    trace = [norm]
    it = 0
    while it < max_newton and norm > 1e-14:
        e, t, mv = unpack(z)
        Jz = J * np.concatenate([[e, t], msc])[None, :] / sc[:, None]
        step, *_ = np.linalg.lstsq(Jz, -rs, rcond=None)
        lam = 1.0
        while True:
            zn = z + lam * step
            try:
                cand = evaluate(zn)
                nn = float(np.linalg.norm(cand[0]))
            except (OverflowError, FloatingPointError, ValueError):
                nn = math.inf
            if nn < norm or lam < 1e-6:
                break
            lam *= 0.5
        it += 1
        if not nn < norm:
            break
        z = zn
        rs, r, sc, J, sr = cand
        norm = nn
        trace.append(norm)
        if np.max(np.abs(lam * step)) < 1e-15:
            break
    e, t, mv = unpack(z)
    return e, t, mv, r, rs, sc, norm, it, trace, sr


def tangency_order_solver(model: ModelDiffeo, k: int, n: int, sigma_signs=(1, -1),
                          max_newton: int = 50, tol: float = RESIDUAL_TOL,
                          check: bool = True) -> TangencySolveState:
    """Solve the k+2 tangency conditions by Newton from the asymptotic seed.

    Sign choices flip sigma (equivalently the orientation of the coordinate
    change at the far end of the excursion).  A choice whose seed gives
    t* <= 0 is skipped.
    """
    if k < 2:
        raise ValidationError("tangency order k must be >= 2")
    if model.global_.k != k:
        raise ValidationError(f"model carries order {model.global_.k}, solver asked for {k}")
    sad = model.saddle
    if not sad.lam * sad.mu ** (k - 1) < 1.0:
        raise ValidationError(f"saddle is not ({k - 1})-shrinking: lam * mu^(k-1) >= 1")
    if n < 1:
        raise ValidationError("n must be >= 1")
    K = k + 2
    best = None
    tried = []
    for sg in sigma_signs:
        sigma = sg * model.global_.sigma
        seed = _seed(model, k, n, sigma)
        e0, t0, mv0, t_ref = seed
        if not t0 > 0:
            tried.append((sg, "seed t* <= 0"))
            continue
        if t0 >= model.box or not 0 < e0 < model.box:
            raise ValidationError(f"seed t*={t0:.3g} outside the chart: increase n")
        e, t, mv, r, rs, sc, norm, it, trace, sr = _newton(model, k, n, sigma, seed, max_newton, K)
        if best is None or norm < best[6]:
            best = (sg, e, t, mv, r, rs, norm, it, trace, sr, sc, seed)
        if norm < tol:
            break
        tried.append((sg, f"residual {norm:.3g}"))
    if best is None:
        raise ConvergenceError(f"no usable sign choice: {tried}")
    sg, e, t, mv, r, rs, norm, it, trace, sr, sc, seed = best
    if not norm < tol:
        raise ConvergenceError(f"Newton stalled at residual norm {norm:.3g} ({tried})",
                               best={"sigma_sign": sg, "norm": norm, "t_star": t, "e": e})
    cert = {
        "d_k1": float(factorial(k + 1) * sr.yhat[k + 1]),
        "dxhat": float(sr.xhat[1]),
    }
    if check:
        if not abs(cert["d_k1"]) > CERT_MIN:
            raise CertificateError(f"(k+1)-st derivative {cert['d_k1']:.3g} too small: tangency order exceeds k")
        if not abs(cert["dxhat"]) > 0.0:
            raise CertificateError("d xhat / dt vanishes at t*")
        cert.update(_fd_recheck(model, k, n, e, t, mv, sg * model.global_.sigma, sc))
        if not (cert["fd_abs"] <= FD_TOL and cert["fd_rel"] <= FD_TOL):
            raise CertificateError(f"finite-difference recheck moved residuals by {cert['fd_rel']:.3g}")
    S = 2.0 * model.c * sad.mu ** n * t
    return TangencySolveState(
        model=model, k=k, n=n, epsilon=e + sad.mu ** (-n), e=e, t_star=t, mu_vec=tuple(mv),
        sigma_sign=int(sg), S=S, residuals=tuple(map(float, r)),
        scaled_residuals=tuple(map(float, rs)), norm=norm, iterations=it,
        trace=tuple(trace), certificates=cert, C=_derivative_table(sr.Y, k),
        seed={"e": seed[0], "t_star": seed[1], "mu": list(seed[2]), "t_ref": seed[3]},
    )


# ------------------------------------------------------------ scaling check

@dataclass(frozen=True)
class ScalingRow:
    s: int
    j: int
    kind: str
    predicted: tuple[int, int] | None
    fitted_S: float | None
    fitted_t: float | None
    ok: bool


def predicted_exponents(s: int, j: int):
    """Exponents (on S, on t*) of d^s(Y^j)/dt^s at t*, or None when it vanishes."""
    if s < j:
        return "zero", None
    if s <= 2 * j:
        return "power", (j, j - s)
    return "high", (j, -j)


def derivative_scaling_check(states, tol: float = 0.15) -> list[ScalingRow]:
    """Fit log|C_sj| against log S and log t* across solved states.

    log S and log t* are both affine in n, so a joint fit is singular.  Each
    exponent is fitted with the other one held at its predicted value.
    """
    states = list(states)
    if len(states) < 2:
        raise ValidationError("scaling fit needs solved states at two or more n")
    k = states[0].k
    if any(st.k != k for st in states):
        raise ValidationError("states mix tangency orders")
    lS = np.log([abs(st.S) for st in states])
    lt = np.log([abs(st.t_star) for st in states])
    rows = []
    for (s_, j) in sorted(states[0].C):
        kind, pred = predicted_exponents(s_, j)
        vals = np.array([st.C[(s_, j)] for st in states])
        if pred is None:
            rows.append(ScalingRow(s_, j, kind, None, None, None, bool(np.all(vals == 0.0))))
            continue
        if np.any(vals == 0.0):
            rows.append(ScalingRow(s_, j, kind, pred, None, None, False))
            continue
        lC = np.log(np.abs(vals))
        fS = float(np.polyfit(lS, lC - pred[1] * lt, 1)[0])
        ft = float(np.polyfit(lt, lC - pred[0] * lS, 1)[0])
        ok = abs(fS - pred[0]) <= tol and abs(ft - pred[1]) <= tol
        rows.append(ScalingRow(s_, j, kind, pred, fS, ft, ok))
    return rows


# ------------------------------------------------------------ presets

def tangency_model(k: int, lam: float = 0.01, mu: float = 2.0, g3: float = 0.5) -> ModelDiffeo:
    """Desk model of order k with a cubic term in the tongue."""
    m = desk_model(lam=lam, mu=mu, sigma=1.0, k=k)
    return dataclasses.replace(m, g=((3, g3),) if g3 else ())


def quadratic_tangency_model(lam: float = 0.01, mu: float = 2.0) -> ModelDiffeo:
    """k = 2, no remainders, parabolic tongue: the seed is the exact solution."""
    g = GlobalMapParams(alpha=1.0, beta=0.0, gamma=1.0, sigma=1.0, k=2)
    return ModelDiffeo(SaddleParams(lam, mu), g)


def solve_sweep(model: ModelDiffeo, k: int, ns, **kw) -> list[TangencySolveState]:
    return [tangency_order_solver(model, k, n, **kw) for n in ns]
