"""Horseshoe rectangles near a homoclinic tangency and k-floor towers.

Coordinates: the saddle chart (x, y) with the homoclinic point q at (1, 0);
near q we write xbar = x - 1.  Points of the rectangle T_n are mapped by the
local map to a neighbourhood of (0, 1), written (xt, yt) with yt = y - 1,
and the global map brings them back next to q.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from mpmath import iv
from scipy import optimize

from .errors import DomainError, OverflowGuardError, ValidationError
from .model_core import (GlobalMap, GlobalMapParams, LocalMap, ModelDiffeo, PlanarMap,
                         RemainderPoly, SaddleParams, global_eval, global_jacobian)

IV_PREC = 96


# ------------------------------------------------------------ rectangles

@dataclass(frozen=True)
class RectangleTn:
    """Right rectangle centred at (1, delta) next to the tangency point."""

    n: int
    delta: float
    width: float        # horizontal length l_n
    height: float       # vertical length Delta_n

    @property
    def center(self) -> tuple[float, float]:
        return (1.0, self.delta)

    @property
    def bottom(self) -> float:
        return self.delta - 0.5 * self.height

    @property
    def top(self) -> float:
        return self.delta + 0.5 * self.height


@dataclass(frozen=True)
class ImageRectangle:
    """Image of T_n under the local iterate, centred at (delta^rho, 1)."""

    n: int
    delta_rho: float
    width: float        # tau_n
    height: float       # L_n
    distance_constant: float | None = None

    @property
    def center(self) -> tuple[float, float]:
        return (self.delta_rho, 1.0)


def delta_rho(saddle: SaddleParams, n: int) -> float:
    """delta_n ** rho, evaluated through the identity mu^(-n rho) = lam^n."""
    return saddle.lam ** n


def rectangle_geometry(saddle: SaddleParams, c: float, n: int,
                       model: ModelDiffeo | None = None) -> tuple[RectangleTn, ImageRectangle]:
    """T_n and its local image; with a model, also the distance constant C
    such that the curvilinear image stays C * delta_n^rho above W^s(p)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not c > 0:
        raise ValidationError("tongue coefficient c must be positive")
    d = saddle.mu ** (-n)
    sq = math.sqrt(d)
    T = RectangleTn(n, d, 3.0 * c * sq, 2.0 * d * sq)
    C = None
    if model is not None:
        C = float(_image_lower_bound(model, n).a) / delta_rho(saddle, n)
    return T, ImageRectangle(n, delta_rho(saddle, n), 3.0 * c * sq * saddle.lam ** n, 2.0 * sq, C)


# ------------------------------------------------------------ interval images

def _ivpoly(poly, X, Y):
    acc = iv.mpf(0)
    for (i, j), v in poly.terms().items():
        acc = acc + iv.mpf(v) * X ** i * Y ** j
    return acc


def _ivglobal(g: GlobalMapParams, X, Y):
    """Interval enclosure of the global map on the box X x Y."""
    yb = iv.mpf(g.gamma) * Y ** g.k + iv.mpf(g.sigma) * X + _ivpoly(g.H2.poly, X, Y)
    for i, m in enumerate(g.mu_vec):
        if m != 0.0:
            yb = yb + iv.mpf(m) * Y ** i
    xb = iv.mpf(g.alpha) * Y + iv.mpf(g.beta) * X + _ivpoly(g.H1.poly, X, Y)
    return xb, yb


def _source_box(model: ModelDiffeo, n: int):
    """(xt, yt) enclosure of the local image of T_n."""
    s = model.saddle
    mp_lam, mp_mu = iv.mpf(s.lam), iv.mpf(s.mu)
    d = mp_mu ** (-n)
    half_l = iv.mpf(1.5) * iv.mpf(model.c) * iv.sqrt(d)
    X = mp_lam ** n * (1 + iv.mpf([-1, 1]) * half_l)
    # mu^n (y - delta) with |y - delta| <= Delta_n / 2 is exactly +-sqrt(delta)
    half_L = iv.sqrt(d)
    return X, half_L


def _target(model: ModelDiffeo, m: int):
    mp_mu = iv.mpf(model.saddle.mu)
    d = mp_mu ** (-m)
    sq = iv.sqrt(d)
    half_h = d * sq
    return d - half_h, d + half_h, iv.mpf(1.5) * iv.mpf(model.c) * sq


def _image_lower_bound(model: ModelDiffeo, n: int, max_boxes: int = 20000):
    """Enclosure of the minimal height of the global image of T_n's local image.

    Best-first bisection in yt; a box stops splitting once its enclosure is
    as tight as the spread caused by the xt interval alone.
    """
    iv.prec = IV_PREC
    g = model.global_
    X, hL = _source_box(model, n)
    _, y0 = _ivglobal(g, X, iv.mpf(0))
    floor_w = y0.delta
    best_hi = y0.b
    heap = []
    count = 0

    def push(Y):
        nonlocal count
        _, yb = _ivglobal(g, X, Y)
        heapq.heappush(heap, (yb.a, count, Y, yb))
        count += 1

    push(iv.mpf([-hL.b, hL.b]))
    while heap:
        lo, _, Y, yb = heapq.heappop(heap)
        if yb.delta <= 2 * floor_w or count >= max_boxes:
            return iv.mpf([lo, max(lo, min(best_hi, yb.b))])
        mid = Y.mid
        _, ym = _ivglobal(g, X, iv.mpf(mid))
        best_hi = min(best_hi, ym.b)
        push(iv.mpf([Y.a, mid]))
        push(iv.mpf([mid, Y.b]))
    raise ValidationError("empty image box")


# ------------------------------------------------------------ horseshoe test

PASS, FAIL, UNSURE = "true", "false", "indeterminate"


@dataclass(frozen=True)
class HorseshoeResult:
    status: str
    witness: tuple[tuple[float, float], ...]
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS


def _worst(*states: str) -> str:
    if FAIL in states:
        return FAIL
    if UNSURE in states:
        return UNSURE
    return PASS


def horseshoe_test(model: ModelDiffeo, n: int, m: int, target=None, max_depth: int = 200) -> HorseshoeResult:
    """Does the return image of T_n cross T_m like a horseshoe?

    Three interval-arithmetic conditions: the fold dips below the bottom of
    T_m, both arm ends rise above its top, and every piece of the image
    inside T_m's height band sits inside its horizontal extent.  ``target``
    optionally overrides T_m by (bottom, top, half_width).
    """
    g = model.global_
    if g.k % 2:
        raise ValidationError("horseshoe geometry needs an even tangency order")
    if n < 1 or m < 1:
        raise ValidationError("rectangle indices must be >= 1")
    iv.prec = IV_PREC
    X, hL = _source_box(model, n)
    if hL.b > model.box or X.b > model.box:
        raise DomainError("local image of T_n leaves the global chart", stage="global", index=n)
    if target is None:
        bot, top, xh = _target(model, m)
    else:
        bot, top, xh = (iv.mpf(v) for v in target)

    # fold: the value on yt = 0 bounds the minimum from above
    _, y0 = _ivglobal(g, X, iv.mpf(0))
    if y0.b < bot.a:
        fold = PASS
    else:
        low = _image_lower_bound(model, n)
        fold = FAIL if low.a >= bot.b else UNSURE

    arms = []
    for end in (-hL, hL):
        _, ye = _ivglobal(g, X, end)
        if ye.a > top.b:
            arms.append(PASS)
        elif ye.b < top.a:
            arms.append(FAIL)
        else:
            arms.append(UNSURE)

    witness = []
    cross = []
    for sign in (-1, 1):
        Y = iv.mpf([0, hL.b]) if sign > 0 else iv.mpf([-hL.b, 0])
        state, hull = _crossing(g, X, Y, bot, top, xh, max_depth)
        cross.append(state)
        if hull is not None:
            witness.append((float(hull[0]), float(hull[1])))
    status = _worst(fold, *arms, *cross)
    details = {"fold": fold, "arms": tuple(arms), "crossing": tuple(cross)}
    return HorseshoeResult(status, tuple(witness), details)


def _crossing(g, X, Y, bot, top, xh, max_depth):
    """Classify the part of the image over Y that lies in the band [bot, top]."""
    state = PASS
    lo_hull, hi_hull = None, None
    stack = [(Y, 0)]
    while stack:
        Yi, dep = stack.pop()
        xb, yb = _ivglobal(g, X, Yi)
        if yb.b < bot.a or yb.a > top.b:
            continue
        inside = xb.a > -xh.a and xb.b < xh.a
        if inside:
            lo_hull = xb.a if lo_hull is None else min(lo_hull, xb.a)
            hi_hull = xb.b if hi_hull is None else max(hi_hull, xb.b)
            continue
        in_band = yb.a >= bot.b and yb.b <= top.a
        outside = xb.a >= xh.b or xb.b <= -xh.b
        if in_band and outside:
            return FAIL, None
        if dep >= max_depth:
            state = UNSURE
            continue
        mid = Yi.mid
        stack.append((iv.mpf([Yi.a, mid]), dep + 1))
        stack.append((iv.mpf([mid, Yi.b]), dep + 1))
    hull = None if lo_hull is None else (lo_hull, hi_hull)
    return state, hull


# ------------------------------------------------------------ floor saddles

@dataclass(frozen=True)
class FloorSaddle:
    """Saddle of the return map f^(n+N) inside T_n."""

    n: int
    period: int
    xbar: float
    ybar: float
    yt: float
    nu_s: float
    nu_u: float
    slope_s: float      # d ybar / d xbar along the stable direction
    dxbar_dyt_u: float  # d xbar / d yt along the unstable direction

    @property
    def multipliers(self) -> tuple[float, float]:
        return (self.nu_s, self.nu_u)


def floor_saddle(model: ModelDiffeo, n: int) -> FloorSaddle:
    """Saddle of the return map in T_n on the yt > 0 branch.

    Solved in the scaled unknowns xbar / sqrt(delta_n) and yt / sqrt(delta_n)
    so the equations stay well conditioned for large n.
    """
    s, g = model.saddle, model.global_
    d = s.mu ** (-n)
    if d == 0.0:
        raise OverflowGuardError(f"mu^-{n} underflows")
    sq = math.sqrt(d)
    lm = (s.lam * s.mu) ** n
    lamn = s.lam ** n
    mun = s.mu ** n

    def resid(z):
        xi, v = z
        xbar, yt = xi * sq, v * sq
        xt = lamn * (1.0 + xbar)
        xb = g.alpha * yt + g.beta * xt + g.H1(xt, yt)
        # mu^n * ybar' - 1 - yt, each term scaled by mu^n separately
        poly = g.gamma * v ** g.k * d ** (g.k / 2 - 1)
        for i, m in enumerate(g.mu_vec):
            poly += m * mun * yt ** i
        yy = poly + g.sigma * lm * (1.0 + xbar) + g.H2(xt, yt) * mun - 1.0 - yt
        return [(xb - xbar) / sq, yy]

    v0 = abs(g.gamma) ** (-1.0 / g.k)
    sol = optimize.root(resid, [g.alpha * v0, v0], method="hybr", tol=1e-15)
    # hybr reports "xtol too small" once it sits on the root, so judge by residual
    if not np.all(np.isfinite(sol.x)) or max(abs(r) for r in resid(sol.x)) > 1e-10:
        raise ValidationError(f"no saddle of the return map found in T_{n}")
    xi, v = sol.x
    xbar, yt = float(xi * sq), float(v * sq)
    xt = lamn * (1.0 + xbar)
    G = global_jacobian(g, xt, yt)
    a, b = G[0, 0] * lamn, G[0, 1] * mun
    c_, dd = G[1, 0] * lamn, G[1, 1] * mun
    det = float(np.linalg.det(G)) * lm
    tr = a + dd
    disc = math.sqrt(max(tr * tr - 4.0 * det, 0.0))
    nu_u = 0.5 * (tr + math.copysign(disc, tr))
    nu_s = det / nu_u
    slope_s = (nu_s - a) / b
    dx_dy_u = d * b / (nu_u - a)
    return FloorSaddle(n, n + g.N_global, xbar, d * (1.0 + yt), yt, nu_s, nu_u, slope_s, dx_dy_u)


def unstable_vertex(model: ModelDiffeo, p: FloorSaddle) -> tuple[float, float]:
    """Lowest point (xbar, ybar) of the return image of W^u_loc(p).

    W^u_loc(p) is the unstable eigen-segment through p, parametrized by yt.
    """
    s, g = model.saddle, model.global_
    lamn = s.lam ** p.n
    half = math.sqrt(s.mu ** (-p.n))

    def height(yt):
        xbar = p.xbar + (yt - p.yt) * p.dxbar_dyt_u
        xt = lamn * (1.0 + xbar)
        return float(global_eval(g, xt, yt)[1])

    def slope(yt):
        xbar = p.xbar + (yt - p.yt) * p.dxbar_dyt_u
        xt = lamn * (1.0 + xbar)
        J = global_jacobian(g, xt, yt)
        return J[1, 0] * lamn * p.dxbar_dyt_u + J[1, 1]

    yt = 0.0
    for _ in range(100):
        h = 1e-7 * max(half, 1e-300)
        curv = (slope(yt + h) - slope(yt - h)) / (2 * h)
        step = slope(yt) / curv
        yt -= step
        if abs(step) <= 1e-17 * max(1.0, abs(yt)) or not math.isfinite(yt):
            break
    if not (-half <= yt <= half):
        raise ValidationError("fold of W^u lies outside the image strip")
    xbar = p.xbar + (yt - p.yt) * p.dxbar_dyt_u
    xt = lamn * (1.0 + xbar)
    xb, yb = global_eval(g, xt, yt)
    return float(xb), float(yb)


def stable_height(p: FloorSaddle, xbar: float) -> float:
    """Height of the stable eigen-segment of p above the abscissa xbar."""
    return p.ybar + p.slope_s * (xbar - p.xbar)


# ------------------------------------------------------------ towers

@dataclass(frozen=True)
class TowerSpec:
    """Indices n_1 < ... < n_k with floor saddles and gap data.

    ``t[i]`` is the distance between the centres of consecutive rectangles,
    ``s[i]`` the vertical distance from the fold of W^u(p_i) to W^s_loc(p_{i+1})
    plus t[i] (so s[i] - t[i] is that fold-to-manifold gap).
    """

    model: ModelDiffeo
    indices: tuple[int, ...]
    floors: tuple[FloorSaddle, ...]
    t: tuple[float, ...]
    s: tuple[float, ...]
    gaps: tuple[float, ...]


def select_tower_indices(model: ModelDiffeo, k: int, n1: int, max_index: int | None = None) -> TowerSpec:
    """Greedy scan for the largest index whose rectangle the previous
    floor's image still crosses like a horseshoe."""
    if k < 1:
        raise ValidationError("a tower needs at least one floor")
    rho = model.saddle.rho
    if not horseshoe_test(model, n1, n1).passed:
        raise ValidationError(f"n_1 = {n1} too small: T_n1 and its image do not form a horseshoe")
    idx = [n1]
    for _ in range(k - 1):
        n = idx[-1]
        bound = max_index or int(math.ceil(rho * n)) + 40
        last = None
        m = n + 1
        while m <= bound:
            if not horseshoe_test(model, n, m).passed:
                break
            last = m
            m += 1
        else:
            raise ValidationError(f"scan bound {bound} reached without a failing index after n = {n}")
        if last is None:
            raise ValidationError(f"no admissible index after n = {n}")
        if not horseshoe_test(model, last, last).passed:
            raise ValidationError(f"T_{last} and its image do not form a horseshoe")
        idx.append(last)
    floors = tuple(floor_saddle(model, n) for n in idx)
    mu = model.saddle.mu
    t, s, gaps = [], [], []
    for i in range(k - 1):
        ti = mu ** (-idx[i]) - mu ** (-idx[i + 1])
        vx, vy = unstable_vertex(model, floors[i])
        gap = stable_height(floors[i + 1], vx) - vy
        t.append(ti)
        gaps.append(gap)
        s.append(ti + gap)
    return TowerSpec(model, tuple(idx), floors, tuple(t), tuple(s), tuple(gaps))


@dataclass(frozen=True)
class GapReport:
    r: float
    rho: float
    ratios: tuple[float, ...]
    bounds: tuple[float, ...]
    gap_limits: tuple[float, ...]
    flagged: bool

    @property
    def within_bounds(self) -> bool:
        return all(0 < q <= b for q, b in zip(self.ratios, self.bounds))


def gap_ratio(spec: TowerSpec, r: float) -> GapReport:
    """(s_i - t_i) / t_i^r per floor with the envelope mu * delta_{n_i}^(rho - r).

    ``gap_limits`` holds delta_{n_{i+1}} + Delta_{n_i}, the direct upper bound
    for s_i - t_i.  ``flagged`` marks r > rho, where smallness is not implied.
    """
    sad = spec.model.saddle
    rho = sad.rho
    ratios, bounds, limits = [], [], []
    # s_i - t_i is read from the stored gap: forming it by subtraction cancels
    for i, (ti, gi) in enumerate(zip(spec.t, spec.gaps)):
        n, m = spec.indices[i], spec.indices[i + 1]
        ratios.append(float(gi) / ti ** r)
        dn = sad.mu ** (-n)
        bounds.append(sad.mu * dn ** (rho - r))
        limits.append(sad.mu ** (-m) + 2.0 * dn ** 1.5)
    return GapReport(float(r), rho, tuple(ratios), tuple(bounds), tuple(limits), r > rho)


def tower_model(lam: float = 0.01, mu: float = 2.0, c: float = 1.0, sigma: float = 1.0) -> ModelDiffeo:
    """Desk model for tower experiments.

    alpha = 1.25 and gamma = 1.5625 c keep the tongue coefficient equal to c
    while lifting the arm ends of each image above the top of its rectangle.
    """
    H1 = RemainderPoly.from_terms({(1, 1): 0.3, (0, 2): 0.2}, (1, 1))
    H2 = RemainderPoly.from_terms({(1, 1): 0.4, (0, 3): 0.1}, (1, 2))
    g = GlobalMapParams(alpha=1.25, beta=0.5, gamma=1.5625 * c, sigma=sigma, k=2, H1=H1, H2=H2)
    return ModelDiffeo(SaddleParams(lam, mu), g, c=c)


# ------------------------------------------------------------ bump perturbation

def bump(u2, r: int):
    """(1 - |u|^2)^(r+1) on the unit disk, zero outside; C^r across the rim."""
    u2 = np.asarray(u2, float)
    return np.where(u2 < 1.0, np.clip(1.0 - u2, 0.0, None) ** (r + 1), 0.0)


class BumpedGlobalMap(PlanarMap):
    """Global map plus eps * bump((p - center) / radius) in the second output.

    ``center`` is given in the global chart (xt, yt).
    """

    def __init__(self, base: GlobalMap, center, radius: float, eps: float, r: int):
        self.base = base
        self.center = (float(center[0]), float(center[1]))
        self.radius, self.eps, self.r = float(radius), float(eps), int(r)

    def _u2(self, x, y):
        xt, yt = self.base._coords(x, y)
        return ((xt - self.center[0]) ** 2 + (yt - self.center[1]) ** 2) / self.radius ** 2, xt, yt

    def apply(self, x, y):
        xb, yb = self.base.apply(x, y)
        if self.eps == 0.0:
            return xb, yb
        u2, _, _ = self._u2(x, y)
        return xb, yb + self.eps * bump(u2, self.r)

    def jacobian(self, x, y):
        J = self.base.jacobian(x, y)
        u2, xt, yt = self._u2(x, y)
        if self.eps != 0.0 and u2 < 1.0:
            f = -self.eps * (self.r + 1) * (1.0 - u2) ** self.r * 2.0 / self.radius ** 2
            J = J.copy()
            J[1, 0] += f * (xt - self.center[0])
            J[1, 1] += f * (yt - self.center[1])
        return J


@dataclass(frozen=True)
class PerturbedModel:
    model: ModelDiffeo
    center: tuple[float, float]
    radius: float
    eps: float
    r: int

    @property
    def size(self) -> float:
        """C^r-size surrogate eps / radius^r."""
        return abs(self.eps) / self.radius ** self.r

    def global_map(self, shifted: bool = False) -> PlanarMap:
        base = GlobalMap(self.model.global_, self.model.box, shifted=shifted)
        return BumpedGlobalMap(base, self.center, self.radius, self.eps, self.r)

    def return_map(self, n: int) -> PlanarMap:
        from .model_core import Compose

        return Compose(LocalMap(self.model.saddle, n), self.global_map(shifted=True))


def bump_perturbation(model: ModelDiffeo, center, radius: float, eps: float, r: int = 2) -> PerturbedModel:
    if not radius > 0:
        raise ValidationError("bump radius must be positive")
    cx, cy = float(center[0]), float(center[1])
    if abs(cx) + radius > model.box or abs(cy) + radius > model.box:
        raise ValidationError("bump ball must lie inside the chart")
    return PerturbedModel(model, (cx, cy), float(radius), float(eps), int(r))
