"""Model diffeomorphism near a homoclinic tangency.

The model is a linear saddle ``(x, y) -> (lam*x, mu*y)`` in normal coordinates
together with a polynomial "global" map that carries a neighbourhood of the
point (0, 1) on the unstable axis back to a neighbourhood of (1, 0) on the
stable axis.  In the shifted coordinates ``xt = x``, ``yt = y - 1`` the global
map reads::

    xbar = alpha*yt + beta*xt + H1(xt, yt)
    ybar = gamma*yt**k + sum_i mu_i*yt**i + sigma*xt + H2(xt, yt)

All derivatives are taken from polynomial coefficients; nothing here uses
finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jets, kvfile
from .errors import DomainError, OverflowGuardError, SchemaError, ValidationError

_LOG_MAX = math.log(np.finfo(float).max)


# ---------------------------------------------------------------- saddle

@dataclass(frozen=True)
class SaddleParams:
    """Multipliers of the linear saddle, 0 < lam < 1 < mu.

    Dissipativity and nonresonance are properties checked by
    :func:`validate_saddle`; the constructor only enforces the ordering so
    that boundary cases can still be iterated and inspected.
    """

    lam: float
    mu: float
    resonance_order: int = 10
    resonance_tol: float = 1e-9

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.mu)):
            raise ValidationError("saddle multipliers must be finite")
        if not 0.0 < self.lam < 1.0:
            raise ValidationError(f"need 0 < lambda < 1, got {self.lam}")
        if not self.mu > 1.0:
            raise ValidationError(f"need mu > 1, got {self.mu}")
        if self.resonance_order < 1 or not self.resonance_tol > 0:
            raise ValidationError("resonance order and tolerance must be positive")

    @property
    def rho(self) -> float:
        return saddle_exponent(self)


@dataclass(frozen=True)
class SaddleReport:
    dissipative: bool
    nonresonant: bool
    rho: float
    resonances: tuple[tuple[int, int], ...] = ()

    @property
    def ok(self) -> bool:
        return self.dissipative and self.nonresonant


def saddle_exponent(s: SaddleParams) -> float:
    """rho = -log(lam) / log(mu)."""
    return -math.log(s.lam) / math.log(s.mu)


def is_at_least_r_shrinking(s: SaddleParams, r: float) -> bool:
    return saddle_exponent(s) > r


def saddle_report(s: SaddleParams) -> SaddleReport:
    K = s.resonance_order
    hits = tuple(
        (n, m)
        for n in range(1, K + 1)
        for m in range(1, K + 1)
        if abs(s.lam ** n * s.mu ** m - 1.0) <= s.resonance_tol
    )
    return SaddleReport(
        dissipative=s.lam * s.mu < 1.0,
        nonresonant=not hits,
        rho=saddle_exponent(s),
        resonances=hits,
    )


def validate_saddle(s: SaddleParams, require_nonresonant: bool = False) -> SaddleReport:
    """Report on a saddle, raising if it is not dissipative.

    Resonances are always reported.  They only cause rejection when
    ``require_nonresonant`` is set, because the model is defined directly in
    linearizing coordinates and never needs the linearization theorem.
    """
    rep = saddle_report(s)
    if not rep.dissipative:
        raise ValidationError(
            f"saddle not dissipative: lambda*mu = {s.lam * s.mu!r} >= 1"
        )
    if require_nonresonant and not rep.nonresonant:
        n, m = rep.resonances[0]
        raise ValidationError(f"resonance lambda^{n} mu^{m} = 1 within tolerance")
    return rep


# ---------------------------------------------------------- polynomials

class BiPoly:
    """Bivariate polynomial sum c[i, j] x**i y**j with a float coefficient grid."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        if isinstance(coeffs, dict):
            if coeffs:
                di = max(i for i, _ in coeffs) + 1
                dj = max(j for _, j in coeffs) + 1
            else:
                di = dj = 1
            c = np.zeros((di, dj))
            for (i, j), v in coeffs.items():
                if i < 0 or j < 0:
                    raise ValidationError("negative exponent in polynomial")
                c[i, j] = float(v)
        else:
            c = np.array(coeffs, dtype=float, ndmin=2).copy()
        c.setflags(write=False)
        self.c = c

    @classmethod
    def zero(cls) -> "BiPoly":
        return cls(np.zeros((1, 1)))

    def terms(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(self.c[i, j]) for i, j in zip(*np.nonzero(self.c))}

    @property
    def total_degree(self) -> int:
        t = self.terms()
        return max((i + j for i, j in t), default=0)

    def coeff(self, i: int, j: int) -> float:
        if i < self.c.shape[0] and j < self.c.shape[1]:
            return float(self.c[i, j])
        return 0.0

    def __call__(self, x, y):
        # Horner in y inside Horner in x
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        acc = np.zeros(np.broadcast(x, y).shape)
        for i in range(self.c.shape[0] - 1, -1, -1):
            row = np.zeros_like(acc)
            for j in range(self.c.shape[1] - 1, -1, -1):
                row = row * y + self.c[i, j]
            acc = acc * x + row
        return acc if acc.ndim else float(acc)

    def deriv(self, dx: int = 0, dy: int = 0) -> "BiPoly":
        c = self.c
        for _ in range(dx):
            if c.shape[0] == 1:
                return BiPoly.zero()
            c = c[1:, :] * np.arange(1, c.shape[0])[:, None]
        for _ in range(dy):
            if c.shape[1] == 1:
                return BiPoly.zero()
            c = c[:, 1:] * np.arange(1, c.shape[1])[None, :]
        return BiPoly(c)

    def __eq__(self, other) -> bool:
        return isinstance(other, BiPoly) and self.terms() == other.terms()

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.terms().items())))

    def __repr__(self) -> str:
        return f"BiPoly({self.terms()})"


@dataclass(frozen=True, eq=False)
class RemainderPoly:
    """Higher-order remainder of the global map.

    ``vanishing = (vx, vy)`` forbids the constant term, the pure ``x**i``
    terms with i <= vx and the pure ``y**j`` terms with j <= vy, i.e. the
    polynomial and those partials vanish at the origin.
    """

    poly: BiPoly = field(default_factory=BiPoly.zero)
    vanishing: tuple[int, int] = (1, 1)

    def __post_init__(self):
        vx, vy = self.vanishing
        for (i, j), v in self.poly.terms().items():
            if v == 0.0:
                continue
            if (j == 0 and i <= vx) or (i == 0 and j <= vy):
                raise ValidationError(
                    f"remainder term x^{i} y^{j} violates vanishing order {self.vanishing}"
                )

    @classmethod
    def from_terms(cls, terms: dict[tuple[int, int], float], vanishing=(1, 1)):
        return cls(BiPoly(terms), tuple(vanishing))

    def __call__(self, x, y):
        return self.poly(x, y)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RemainderPoly)
            and self.poly == other.poly
            and tuple(self.vanishing) == tuple(other.vanishing)
        )

    def __hash__(self) -> int:
        return hash((self.poly, tuple(self.vanishing)))


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


# ------------------------------------------------------------ global map

@dataclass(frozen=True)
class GlobalMapParams:
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0
    sigma: float = 0.0
    k: int = 2
    mu_vec: tuple[float, ...] = ()
    H1: RemainderPoly | None = None
    H2: RemainderPoly | None = None
    N_global: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("tangency order k must be >= 1")
        if self.alpha == 0.0 or self.gamma == 0.0:
            raise ValidationError("alpha and gamma must be nonzero")
        mv = tuple(float(v) for v in self.mu_vec) or (0.0,) * self.k
        if len(mv) != self.k:
            raise ValidationError(f"need {self.k} unfolding coefficients, got {len(mv)}")
        object.__setattr__(self, "mu_vec", mv)
        h1 = self.H1 if self.H1 is not None else RemainderPoly(vanishing=(1, 1))
        h2 = self.H2 if self.H2 is not None else RemainderPoly(vanishing=(1, self.k))
        # re-check against the orders this k demands
        RemainderPoly(h1.poly, (1, 1))
        RemainderPoly(h2.poly, (1, self.k))
        object.__setattr__(self, "H1", RemainderPoly(h1.poly, (1, 1)))
        object.__setattr__(self, "H2", RemainderPoly(h2.poly, (1, self.k)))
        if self.N_global < 1:
            raise ValidationError("N_global must be positive")

    def with_mu(self, mu_vec: Sequence[float]) -> "GlobalMapParams":
        return _replace(self, mu_vec=tuple(mu_vec))


def _replace(obj, **kw):
    import dataclasses

    return dataclasses.replace(obj, **kw)


def _unfold_poly(g: GlobalMapParams, yt, mu_vec=None):
    mv = g.mu_vec if mu_vec is None else mu_vec
    acc = g.gamma
    # Horner over gamma*y^k + mu_{k-1} y^{k-1} + ... + mu_0
    for i in range(g.k - 1, -1, -1):
        acc = acc * yt + mv[i]
    return acc


def _unfold_dpoly(g: GlobalMapParams, yt, mu_vec=None):
    mv = g.mu_vec if mu_vec is None else mu_vec
    acc = g.k * g.gamma
    for i in range(g.k - 1, 0, -1):
        acc = acc * yt + i * mv[i]
    return acc


def global_eval(g: GlobalMapParams, xt, yt, mu_vec=None):
    """Vectorized global map without domain checks."""
    xb = g.alpha * yt + g.beta * xt + g.H1(xt, yt)
    yb = _unfold_poly(g, yt, mu_vec) + g.sigma * xt + g.H2(xt, yt)
    return xb, yb


def global_apply(g: GlobalMapParams, p: PlanarPoint, box: float = 1.0) -> PlanarPoint:
    if abs(p.x) > box or abs(p.y) > box:
        raise DomainError(f"({p.x}, {p.y}) outside global chart [-{box},{box}]^2", stage="global")
    xb, yb = global_eval(g, p.x, p.y)
    return PlanarPoint(float(xb), float(yb))


def global_jacobian(g: GlobalMapParams, xt: float, yt: float) -> np.ndarray:
    H1, H2 = g.H1.poly, g.H2.poly
    return np.array(
        [
            [g.beta + H1.deriv(1, 0)(xt, yt), g.alpha + H1.deriv(0, 1)(xt, yt)],
            [g.sigma + H2.deriv(1, 0)(xt, yt), _unfold_dpoly(g, yt) + H2.deriv(0, 1)(xt, yt)],
        ],
        dtype=float,
    )


# ------------------------------------------------------------ local map

def local_iterate(s: SaddleParams, p: PlanarPoint, n: int) -> PlanarPoint:
    if n < 0:
        raise ValidationError("n must be >= 0")
    if n == 0:
        return p
    if p.y != 0.0 and n * math.log(s.mu) + math.log(abs(p.y)) >= _LOG_MAX:
        raise OverflowGuardError(f"mu^{n} * y overflows for y={p.y}")
    return PlanarPoint(s.lam ** n * p.x, s.mu ** n * p.y if p.y != 0.0 else 0.0)


# ------------------------------------------------------------ model

@dataclass(frozen=True)
class ModelDiffeo:
    """Saddle + global map + shape of the unstable-manifold tongue.

    The tongue near the homoclinic point is the graph ``ybar = c*xbar**2 +
    g(xbar)``.  ``g`` maps powers (>= 3) to coefficients.  The same
    coefficient plays the role of ``a`` in the tangency solver.
    """

    saddle: SaddleParams
    global_: GlobalMapParams
    c: float = 1.0
    g: tuple[tuple[int, float], ...] = ()
    box: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError("tongue coefficient c must be positive")
        gg = tuple(sorted((int(p), float(v)) for p, v in dict(self.g).items() if v != 0.0))
        for p, _ in gg:
            if p <= 2:
                raise ValidationError("g must have no terms of order <= 2")
        object.__setattr__(self, "g", gg)
        if not self.box > 0:
            raise ValidationError("chart box must be positive")

    def g_coeffs(self) -> np.ndarray:
        """Ascending coefficient array of c*t^2 + g(t)."""
        deg = max([2] + [p for p, _ in self.g])
        arr = np.zeros(deg + 1)
        arr[2] = self.c
        for p, v in self.g:
            arr[p] += v
        return arr


# ------------------------------------------------------------ map objects

class PlanarMap:
    """Minimal protocol: vectorized ``apply`` and pointwise ``jacobian``."""

    def apply(self, x, y):
        raise NotImplementedError

    def jacobian(self, x: float, y: float) -> np.ndarray:
        raise NotImplementedError

    def jet(self, x: float, y: float, K: int):
        """Taylor coefficients of both components at (x, y) up to order K."""
        raise NotImplementedError

    def __call__(self, p: PlanarPoint) -> PlanarPoint:
        x, y = self.apply(p.x, p.y)
        return PlanarPoint(float(x), float(y))


class LocalMap(PlanarMap):
    def __init__(self, saddle: SaddleParams, n: int = 1):
        self.saddle, self.n = saddle, n
        self.a, self.b = saddle.lam ** n, saddle.mu ** n

    def apply(self, x, y):
        return self.a * np.asarray(x, float), self.b * np.asarray(y, float)

    def jacobian(self, x, y):
        return np.diag([self.a, self.b])

    def jet(self, x, y, K):
        jx, jy = jets.const(self.a * x, K), jets.const(self.b * y, K)
        if K >= 1:
            jx[1, 0], jy[0, 1] = self.a, self.b
        return jx, jy


class GlobalMap(PlanarMap):
    """Global map acting on (x, y) with the shift yt = y - 1 built in.

    Used when composing with the local map in the saddle's own chart.
    ``shifted=False`` treats inputs directly as (xt, yt).
    """

    def __init__(self, params: GlobalMapParams, box: float | None = 1.0, shifted: bool = False):
        self.params, self.box, self.shifted = params, box, shifted

    def _coords(self, x, y):
        xt = np.asarray(x, float)
        yt = np.asarray(y, float) - (1.0 if self.shifted else 0.0)
        if self.box is not None and (np.any(np.abs(xt) > self.box) or np.any(np.abs(yt) > self.box)):
            raise DomainError("point outside global chart", stage="global")
        return xt, yt

    def apply(self, x, y):
        xt, yt = self._coords(x, y)
        xb, yb = global_eval(self.params, xt, yt)
        if self.shifted:
            xb = xb + 1.0
        return xb, yb

    def jacobian(self, x, y):
        xt, yt = self._coords(x, y)
        return global_jacobian(self.params, float(xt), float(yt))

    def polys(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient grids of both components in (xt, yt)."""
        g = self.params
        h1, h2 = g.H1.poly.c, g.H2.poly.c
        di = max(2, h1.shape[0], h2.shape[0])
        dj = max(g.k + 1, h1.shape[1], h2.shape[1])
        cx = np.zeros((di, dj))
        cy = np.zeros((di, dj))
        cx[: h1.shape[0], : h1.shape[1]] += h1
        cy[: h2.shape[0], : h2.shape[1]] += h2
        cx[0, 1] += g.alpha
        cx[1, 0] += g.beta
        cy[1, 0] += g.sigma
        cy[0, g.k] += g.gamma
        for i, m in enumerate(g.mu_vec):
            cy[0, i] += m
        return cx, cy

    def jet(self, x, y, K):
        xt, yt = self._coords(x, y)
        cx, cy = self.polys()
        jx = jets.shift_poly(cx, float(xt), float(yt), K)
        jy = jets.shift_poly(cy, float(xt), float(yt), K)
        if self.shifted:
            jx[0, 0] += 1.0
        return jx, jy


class LimitMap(PlanarMap):
    """(x, y) -> (y, y**k + sum M_i y**i)."""

    def __init__(self, k: int, M: Sequence[float]):
        if k < 2:
            raise ValidationError("limit family needs k >= 2")
        M = tuple(float(m) for m in M)
        if len(M) != k:
            raise ValidationError(f"need {k} coefficients M, got {len(M)}")
        if not all(math.isfinite(m) for m in M):
            raise ValidationError("non-finite limit coefficient")
        self.k, self.M = k, M

    def q(self, y):
        acc = 1.0
        for i in range(self.k - 1, -1, -1):
            acc = acc * y + self.M[i]
        return acc

    def dq(self, y):
        acc = float(self.k)
        for i in range(self.k - 1, 0, -1):
            acc = acc * y + i * self.M[i]
        return acc

    def coeffs(self) -> list[float]:
        """Ascending coefficients of the one-dimensional polynomial q."""
        return list(self.M) + [1.0]

    def apply(self, x, y):
        y = np.asarray(y, float)
        return y, self.q(y)

    def jacobian(self, x, y):
        return np.array([[0.0, 1.0], [0.0, float(self.dq(y))]])

    def jet(self, x, y, K):
        jx = jets.const(y, K)
        if K >= 1:
            jx[0, 1] = 1.0
        cy = np.zeros((1, self.k + 1))
        cy[0, :] = self.coeffs()
        return jx, jets.shift_poly(cy, float(x), float(y), K)


class AffineMap(PlanarMap):
    """p -> A p + b; used for coordinate changes."""

    def __init__(self, A, b=(0.0, 0.0)):
        self.A = np.asarray(A, float)
        self.b = np.asarray(b, float)

    def apply(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return (self.A[0, 0] * x + self.A[0, 1] * y + self.b[0],
                self.A[1, 0] * x + self.A[1, 1] * y + self.b[1])

    def jacobian(self, x, y):
        return self.A.copy()

    def jet(self, x, y, K):
        fx, fy = self.apply(x, y)
        jx, jy = jets.const(float(fx), K), jets.const(float(fy), K)
        if K >= 1:
            jx[1, 0], jx[0, 1] = self.A[0]
            jy[1, 0], jy[0, 1] = self.A[1]
        return jx, jy


class Compose(PlanarMap):
    """Composition; ``Compose(f, g)`` applies f first, then g."""

    def __init__(self, *maps: PlanarMap):
        self.maps = maps

    def apply(self, x, y):
        for m in self.maps:
            x, y = m.apply(x, y)
        return x, y

    def jacobian(self, x, y):
        J = np.eye(2)
        for m in self.maps:
            J = m.jacobian(float(x), float(y)) @ J
            x, y = m.apply(x, y)
            x, y = float(x), float(y)
        return J

    def jet(self, x, y, K):
        cur = None
        for m in self.maps:
            step = m.jet(float(x), float(y), K)
            cur = step if cur is None else jets.compose_maps(cur, step, K)
            x, y = m.apply(x, y)
        return cur


class Iterate(PlanarMap):
    def __init__(self, f: PlanarMap, n: int):
        if n < 1:
            raise ValidationError("iterate count must be >= 1")
        self.f, self.n = f, n

    def apply(self, x, y):
        for _ in range(self.n):
            x, y = self.f.apply(x, y)
        return x, y

    def jacobian(self, x, y):
        return Compose(*([self.f] * self.n)).jacobian(x, y)

    def jet(self, x, y, K):
        return Compose(*([self.f] * self.n)).jet(x, y, K)


def jacobian(f: PlanarMap, p: PlanarPoint) -> np.ndarray:
    """Analytic jacobian of a map object at ``p`` (chain rule for compositions)."""
    return f.jacobian(p.x, p.y)


def return_map(model: ModelDiffeo, n: int) -> PlanarMap:
    """global o local^n acting on the saddle chart (x, y)."""
    return Compose(LocalMap(model.saddle, n), GlobalMap(model.global_, model.box, shifted=True))


# ------------------------------------------------------------ serialization

def _fmt_terms2(p: RemainderPoly) -> str:
    return ", ".join(f"{i}:{j}:{kvfile.fmt_float(v)}" for (i, j), v in sorted(p.poly.terms().items()))


def _parse_terms2(text: str) -> dict[tuple[int, int], float]:
    out = {}
    for item in filter(None, (t.strip() for t in text.split(","))):
        i, j, v = item.split(":")
        out[(int(i), int(j))] = float(v)
    return out


def model_to_config(m: ModelDiffeo) -> dict[str, str]:
    g = m.global_
    d = {
        "lambda": kvfile.fmt_float(m.saddle.lam),
        "mu": kvfile.fmt_float(m.saddle.mu),
        "resonance_order": str(m.saddle.resonance_order),
        "resonance_tol": kvfile.fmt_float(m.saddle.resonance_tol),
        "alpha": kvfile.fmt_float(g.alpha),
        "beta": kvfile.fmt_float(g.beta),
        "gamma": kvfile.fmt_float(g.gamma),
        "sigma": kvfile.fmt_float(g.sigma),
        "k": str(g.k),
    }
    for i, v in enumerate(g.mu_vec):
        d[f"mu{i}"] = kvfile.fmt_float(v)
    d["N"] = str(g.N_global)
    d["c"] = kvfile.fmt_float(m.c)
    d["g"] = ", ".join(f"{p}:{kvfile.fmt_float(v)}" for p, v in m.g)
    d["H1"] = _fmt_terms2(g.H1)
    d["H2"] = _fmt_terms2(g.H2)
    d["box"] = kvfile.fmt_float(m.box)
    return d


MODEL_KEYS_REQUIRED = ("lambda", "mu", "alpha", "beta", "gamma", "sigma", "k")


def model_from_config(d: dict[str, str]) -> ModelDiffeo:
    for key in MODEL_KEYS_REQUIRED:
        if key not in d:
            raise SchemaError(f"missing required key {key!r}")
    k = int(d["k"])
    known = set(MODEL_KEYS_REQUIRED) | {"resonance_order", "resonance_tol", "N", "c", "g", "H1", "H2", "box"}
    known |= {f"mu{i}" for i in range(k)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise SchemaError(f"unknown model key(s): {', '.join(unknown)}")
    saddle = SaddleParams(
        float(d["lambda"]), float(d["mu"]),
        int(d.get("resonance_order", 10)), float(d.get("resonance_tol", 1e-9)),
    )
    gterms = {}
    for item in filter(None, (t.strip() for t in d.get("g", "").split(","))):
        p, v = item.split(":")
        gterms[int(p)] = float(v)
    gp = GlobalMapParams(
        alpha=float(d["alpha"]), beta=float(d["beta"]), gamma=float(d["gamma"]),
        sigma=float(d["sigma"]), k=k,
        mu_vec=tuple(float(d.get(f"mu{i}", 0.0)) for i in range(k)),
        H1=RemainderPoly.from_terms(_parse_terms2(d.get("H1", "")), (1, 1)),
        H2=RemainderPoly.from_terms(_parse_terms2(d.get("H2", "")), (1, k)),
        N_global=int(d.get("N", 1)),
    )
    return ModelDiffeo(saddle, gp, c=float(d.get("c", 1.0)), g=tuple(gterms.items()),
                       box=float(d.get("box", 1.0)))


def dumps_model(m: ModelDiffeo) -> str:
    return kvfile.dumps(model_to_config(m))


def loads_model(text: str) -> ModelDiffeo:
    return model_from_config(kvfile.parse(text))
