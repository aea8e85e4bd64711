"""Rescaled return maps and their convergence to the limit family.

For the n-th return through the saddle neighbourhood the chart near the
homoclinic point (xbar, ybar) is blown up by

    x_n = tau**n * xbar,   y_n = tau**n * (mu**n * ybar - 1),   tau = mu**(1/(k-1)),

and the unfolding coefficients follow a schedule that makes the rescaled
return map converge to ``phi_M(x, y) = (y, y**k + sum M_i y**i)``.

Numerical note: ``mu0`` always contains the term ``mu**-n`` that is cancelled
by the ``-tau**n`` shift of the rescaling.  Evaluating it literally loses
about ``tau**n`` ulps, so the map is evaluated with ``mu0 - mu**-n``
(the "offset"), which the schedule supplies without subtraction.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .model_core import (
    GlobalMapParams,
    LimitMap,
    ModelDiffeo,
    PlanarPoint,
    SaddleParams,
)

STAGES = ("rescale-inverse", "local", "global")


@dataclass(frozen=True)
class RescalePlan:
    n: int
    k: int
    tau: float
    tn: float      # tau**n
    mun: float     # mu**n
    lamn: float    # lam**n

    @classmethod
    def build(cls, saddle: SaddleParams, k: int, n: int) -> "RescalePlan":
        if k < 2:
            raise ValidationError("rescaling needs k >= 2")
        if n < 1:
            raise ValidationError("n must be >= 1")
        tau = saddle.mu ** (1.0 / (k - 1))
        return cls(n, k, tau, tau ** n, saddle.mu ** n, saddle.lam ** n)

    def forward(self, xbar, ybar):
        return self.tn * np.asarray(xbar, float), self.tn * (self.mun * np.asarray(ybar, float) - 1.0)

    def inverse(self, x, y):
        return np.asarray(x, float) / self.tn, (1.0 + np.asarray(y, float) / self.tn) / self.mun


def parameter_schedule(k: int, M: Sequence[float], saddle: SaddleParams, sigma: float, n: int):
    """Unfolding coefficients mu_0(n), ..., mu_{k-1}(n) that produce phi_M."""
    mu0_off, rest = _schedule_parts(k, M, saddle, sigma, n)
    return (mu0_off + saddle.mu ** (-n),) + rest


def schedule_offset(k: int, M: Sequence[float], saddle: SaddleParams, sigma: float, n: int) -> float:
    """mu_0(n) - mu**-n computed without cancellation."""
    return _schedule_parts(k, M, saddle, sigma, n)[0]


def _schedule_parts(k, M, saddle, sigma, n):
    if k < 2:
        raise ValidationError("schedule needs k >= 2")
    if len(M) != k:
        raise ValidationError(f"need {k} limit coefficients, got {len(M)}")
    if n < 1:
        raise ValidationError("n must be >= 1")
    mu, lam = saddle.mu, saddle.lam
    off = mu ** (-k * n / (k - 1)) * M[0] - sigma * lam ** n
    rest = tuple(mu ** (-(k - i) * n / (k - 1)) * M[i] for i in range(1, k))
    return off, rest


def limit_map_eval(L: LimitMap, p: PlanarPoint) -> PlanarPoint:
    x, y = L.apply(p.x, p.y)
    return PlanarPoint(float(x), float(y))


# ------------------------------------------------------------ evaluation

def _first_bad(mask) -> int:
    flat = np.flatnonzero(np.ravel(mask))
    return int(flat[0]) if flat.size else -1


def rescaled_eval(model: ModelDiffeo, plan: RescalePlan, X, Y, mu0_offset: float | None = None):
    """Vectorized R_n o (global o local^n) o R_n^{-1} in raw coordinates.

    Raises DomainError tagged with the failing stage and the flat index of
    the first offending input point.
    """
    g = model.global_
    if g.k != plan.k:
        raise ValidationError("plan and model disagree on k")
    box = model.box
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if mu0_offset is None:
        mu0_offset = g.mu_vec[0] - 1.0 / plan.mun

    # stage 1: back to the chart near the homoclinic point
    xbar = X / plan.tn
    yn = Y / plan.tn                  # this is mu^n*ybar - 1, kept exactly
    ybar = (1.0 + yn) / plan.mun
    bad = (np.abs(xbar) > box) | (np.abs(ybar) > box)
    if np.any(bad):
        raise DomainError("rescaled point outside the chart near the tangency",
                          stage="rescale-inverse", index=_first_bad(bad))

    # stage 2: n steps of the linear saddle, expressed in the global chart
    xt = plan.lamn * (1.0 + xbar)
    yt = yn
    bad = (np.abs(xt) > box) | (np.abs(yt) > box)
    if np.any(bad):
        raise DomainError("local iterate outside the global chart", stage="local",
                          index=_first_bad(bad))

    # stage 3: the global map, with mu0 replaced by its offset
    xb = g.alpha * yt + g.beta * xt + g.H1(xt, yt)
    acc = g.gamma
    for i in range(g.k - 1, 0, -1):
        acc = acc * yt + g.mu_vec[i]
    dy = acc * yt + mu0_offset + g.sigma * xt + g.H2(xt, yt)   # = ybar' - mu^-n
    yb_full = dy + 1.0 / plan.mun
    bad = (np.abs(xb) > box) | (np.abs(yb_full) > box)
    if np.any(bad):
        raise DomainError("return lands outside the chart near the tangency", stage="global",
                          index=_first_bad(bad))

    # stage 4: rescale
    return plan.tn * xb, plan.tn * plan.mun * dy


def rescaled_return_map(model: ModelDiffeo, plan: RescalePlan, p: PlanarPoint,
                        mu0_offset: float | None = None) -> PlanarPoint:
    x, y = rescaled_eval(model, plan, p.x, p.y, mu0_offset)
    return PlanarPoint(float(x), float(y))


# ------------------------------------------------------------ normalization

@dataclass(frozen=True)
class Normalizer:
    """Linear conjugacy (x, y) = (a u, b v) that sends alpha, gamma to 1."""

    a: float
    b: float

    @classmethod
    def for_model(cls, g: GlobalMapParams) -> "Normalizer":
        k = g.k
        if g.gamma > 0:
            b = g.gamma ** (-1.0 / (k - 1))
        elif (k - 1) % 2 == 1:
            b = -((-g.gamma) ** (-1.0 / (k - 1)))
        else:
            raise ValidationError(
                f"gamma < 0 with k-1 = {k - 1} even cannot be normalized to +1 by a real scaling"
            )
        return cls(g.alpha * b, b)

    def raw_M(self, M: Sequence[float]) -> tuple[float, ...]:
        return tuple(m * self.b ** (1 - i) for i, m in enumerate(M))


def scheduled_model(model: ModelDiffeo, L: LimitMap, n: int):
    """Apply the schedule for L to the model.  Returns (model, plan, offset, normalizer)."""
    g = model.global_
    if g.k != L.k:
        raise ValidationError("limit map and model have different k")
    norm = Normalizer.for_model(g)
    Mraw = norm.raw_M(L.M)
    mu_vec = parameter_schedule(g.k, Mraw, model.saddle, g.sigma, n)
    off = schedule_offset(g.k, Mraw, model.saddle, g.sigma, n)
    m2 = replace(model, global_=g.with_mu(mu_vec))
    plan = RescalePlan.build(model.saddle, g.k, n)
    return m2, plan, off, norm


def normalized_eval(model: ModelDiffeo, L: LimitMap, n: int, U, V):
    m2, plan, off, norm = scheduled_model(model, L, n)
    x, y = rescaled_eval(m2, plan, norm.a * np.asarray(U, float), norm.b * np.asarray(V, float), off)
    return x / norm.a, y / norm.b


# ------------------------------------------------------------ distances

@dataclass(frozen=True)
class GridSpec:
    lo: float = -2.0
    hi: float = 2.0
    step: float = 0.1

    def axis(self) -> np.ndarray:
        if not (self.hi > self.lo and self.step > 0):
            raise ValidationError("bad grid specification")
        if self.lo < -2.0 - 1e-12 or self.hi > 2.0 + 1e-12:
            raise ValidationError("grid must lie inside [-2, 2]^2")
        m = int(round((self.hi - self.lo) / self.step))
        return np.linspace(self.lo, self.hi, m + 1)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    d0: float
    d1: float = math.nan
    d2: float = math.nan
    escaped: str | None = None


def _differences(E: np.ndarray, h: float, r: int) -> tuple[float, float]:
    """Centered first and second differences of E (shape 2 x nx x ny)."""
    d1 = d2 = math.nan
    if r >= 1:
        dx = (E[:, 2:, 1:-1] - E[:, :-2, 1:-1]) / (2 * h)
        dy = (E[:, 1:-1, 2:] - E[:, 1:-1, :-2]) / (2 * h)
        d1 = float(max(np.max(np.abs(dx)), np.max(np.abs(dy))))
    if r >= 2:
        c = E[:, 1:-1, 1:-1]
        dxx = (E[:, 2:, 1:-1] - 2 * c + E[:, :-2, 1:-1]) / h ** 2
        dyy = (E[:, 1:-1, 2:] - 2 * c + E[:, 1:-1, :-2]) / h ** 2
        dxy = (E[:, 2:, 2:] - E[:, 2:, :-2] - E[:, :-2, 2:] + E[:, :-2, :-2]) / (4 * h ** 2)
        d2 = float(max(np.max(np.abs(dxx)), np.max(np.abs(dyy)), np.max(np.abs(dxy))))
    return d1, d2


def cr_distance(model: ModelDiffeo, L: LimitMap, n: int, grid: GridSpec = GridSpec(), r: int = 2) -> ConvergenceRow:
    """Grid seminorms of (rescaled return map - phi_M) up to order r.

    The model's unfolding coefficients are replaced by the schedule for L;
    alpha and gamma are normalized away before comparing.
    """
    if r not in (0, 1, 2):
        raise ValidationError("r must be 0, 1 or 2")
    ax = grid.axis()
    U, V = np.meshgrid(ax, ax, indexing="ij")
    Fx, Fy = normalized_eval(model, L, n, U, V)
    Lx, Ly = L.apply(U, V)
    E = np.stack([Fx - Lx, Fy - Ly])
    d0 = float(np.max(np.abs(E)))
    d1, d2 = _differences(E, grid.step, r)
    return ConvergenceRow(n, d0, d1, d2)


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    r: int

    @property
    def d0_strictly_decreasing(self) -> bool:
        d = [row.d0 for row in self.rows if row.escaped is None]
        return len(d) >= 2 and all(b < a for a, b in zip(d, d[1:]))

    def first_below(self, threshold: float):
        for row in self.rows:
            if row.escaped is None and row.d0 < threshold:
                return row
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d0", "d1", "d2"])
        for row in self.rows:
            w.writerow([row.n] + [repr(float(v)) for v in (row.d0, row.d1, row.d2)])
        return buf.getvalue()


def convergence_sweep(model: ModelDiffeo, L: LimitMap, n_range: Iterable[int],
                      grid: GridSpec = GridSpec(), r: int = 2) -> ConvergenceReport:
    ns = list(n_range)
    if not ns:
        raise ValidationError("empty n range")
    rows = []
    for n in ns:
        try:
            rows.append(cr_distance(model, L, n, grid, r))
        except DomainError as exc:
            rows.append(ConvergenceRow(n, math.nan, math.nan, math.nan, escaped=exc.stage))
    return ConvergenceReport(tuple(rows), r)


# ------------------------------------------------------------ presets

def desk_model(lam: float = 0.01, mu: float = 2.0, sigma: float = 1.0, k: int = 2) -> ModelDiffeo:
    """Generic-looking model used by the convergence experiment."""
    from .model_core import RemainderPoly

    H1 = RemainderPoly.from_terms({(1, 1): 0.3, (0, 2): 0.2}, (1, 1))
    H2 = RemainderPoly.from_terms({(1, 1): 0.4, (0, k + 1): 0.1}, (1, k))
    g = GlobalMapParams(alpha=1.0, beta=0.5, gamma=1.0, sigma=sigma, k=k, H1=H1, H2=H2)
    return ModelDiffeo(SaddleParams(lam, mu), g)


def exact_limit_model(lam: float = 0.01, mu: float = 2.0, k: int = 2) -> ModelDiffeo:
    """No remainders, beta = sigma = 0: the rescaled map is phi_M exactly."""
    g = GlobalMapParams(alpha=1.0, beta=0.0, gamma=1.0, sigma=0.0, k=k)
    return ModelDiffeo(SaddleParams(lam, mu), g)
