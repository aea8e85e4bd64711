"""Periodic-orbit census: point finders, classification, counts, zeta series.

One-dimensional polynomial maps are handled exactly (FLINT iterates, Sturm
counts, certified brackets).  Planar maps use Newton from a seed grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import jets
from .errors import DomainError, NonIsolatedError, OverflowGuardError, ValidationError
from .model_core import Iterate, LimitMap, PlanarMap
from .poly1d import (IterateEvaluator, escape_radius, fmpq_poly, is_squarefree,
                     isolate_real_roots, iterate, refine_roots, root_bound,
                     sturm_count, to_poly)

HYPERBOLIC = "hyperbolic"
DEGENERATE = "k-degenerate"
OTHER = "nonhyperbolic-other"
FLAT = "flat-to-order-k_max"

NEWTON_TOL = 1e-12
MARGIN_TOL = 1e-8
DEDUP_RADIUS = 1e-11
K_MAX = 5


@dataclass(frozen=True)
class OrbitRecord:
    """A point fixed by the n-th iterate, with its local type."""

    point: tuple[float, ...]
    period: int
    multipliers: tuple
    classification: str
    residual: float
    least_period: int | None = None
    k: int | None = None
    l_coeffs: tuple[float, ...] = ()

    @property
    def margin(self) -> float:
        """Distance of the multipliers from the unit circle."""
        return min(abs(abs(m) - 1.0) for m in self.multipliers)

    def to_dict(self) -> dict:
        def enc(m):
            m = complex(m)
            return m.real if m.imag == 0.0 else [m.real, m.imag]

        return {
            "point": list(self.point),
            "period": self.period,
            "least_period": self.least_period,
            "multipliers": [enc(m) for m in self.multipliers],
            "classification": self.classification,
            "k": self.k,
            "residual": self.residual,
        }


@dataclass
class Census:
    """P_n table over the window [1, n_max] with the points behind each count."""

    table: dict[int, int]
    n_max: int
    orbits: dict[int, list[OrbitRecord]] = field(default_factory=dict)

    def __post_init__(self):
        for n, v in self.table.items():
            if v < 0:
                raise ValidationError(f"negative count at n={n}")

    @property
    def window(self) -> tuple[int, int]:
        return (1, self.n_max)

    @classmethod
    def from_counts(cls, counts: Sequence[int] | Mapping[int, int]) -> "Census":
        if isinstance(counts, Mapping):
            table = {int(n): int(v) for n, v in counts.items()}
        else:
            table = {i + 1: int(v) for i, v in enumerate(counts)}
        return cls(table, max(table) if table else 0)


@dataclass(frozen=True)
class ZetaSeries:
    order: int
    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        if self.coeffs[0] != 1:
            raise ValidationError("zeta series must start with 1")

    def as_floats(self) -> list[float]:
        return [float(c) for c in self.coeffs]


@dataclass(frozen=True)
class GrowthRate:
    value: float
    window: tuple[int, int]
    argmax: int


class Poly1DMap:
    """One-dimensional polynomial map y -> q(y), coefficients ascending."""

    def __init__(self, coeffs: Sequence[float]):
        c = [float(v) for v in coeffs]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        self.coeffs = c

    def __call__(self, y):
        return np.polynomial.polynomial.polyval(y, self.coeffs)

    def deriv(self, y):
        return np.polynomial.polynomial.polyval(y, np.polynomial.polynomial.polyder(self.coeffs))


# ------------------------------------------------------------ classification

def jet_1d(coeffs: Sequence[float], n: int, y0: float, K: int) -> np.ndarray:
    """Taylor coefficients of q^n at y0 up to order K."""
    s = np.zeros(K + 1)
    s[0] = y0
    if K >= 1:
        s[1] = 1.0
    for _ in range(n):
        qs = jets.taylor_shift_1d(coeffs, s[0], K)
        inner = s.copy()
        inner[0] = 0.0
        s = jets.univariate_compose(qs, inner, K)
    return s


def _on_circle(m: complex, tol: float) -> bool:
    return abs(abs(m) - 1.0) <= tol


def _degeneracy_order(l: Sequence[float], jet_tol: float):
    """l[j] is the coefficient of u**j (j >= 2); returns (k, l_list)."""
    for j in range(2, len(l)):
        if abs(l[j]) > jet_tol:
            return j - 1
    return None


def _series_eval(C: np.ndarray, h: np.ndarray, K: int) -> np.ndarray:
    """Series of sum C[i,j] u^i h(u)^j, h without constant term."""
    out = np.zeros(K + 1)
    hp = np.zeros(K + 1)
    hp[0] = 1.0
    for j in range(C.shape[1]):
        if j > 0:
            hp = np.convolve(hp, h)[: K + 1]
        for i in range(min(C.shape[0], K + 1)):
            if C[i, j] != 0.0:
                out[i:] += C[i, j] * hp[: K + 1 - i]
    return out


def center_manifold_restriction(jet2, K: int):
    """Taylor coefficients of the map restricted to its center manifold.

    ``jet2`` holds the Taylor coefficients (order K) of both components at a
    fixed point with one multiplier equal to 1 and the other one, nu, off the
    unit circle.  Returns (l, h): the restriction u -> sum l[j] u^j and the
    graph w = h(u) in eigen-coordinates.
    """
    jx, jy = (np.array(j, float) for j in jet2)
    A = np.array([[jx[1, 0], jx[0, 1]], [jy[1, 0], jy[0, 1]]])
    w, V = np.linalg.eig(A)
    ic = int(np.argmin(np.abs(w - 1.0)))
    order = [ic, 1 - ic]
    w = np.real_if_close(w[order])
    V = np.real_if_close(V[:, order])
    if np.iscomplexobj(w) or np.iscomplexobj(V):
        raise ValidationError("center direction is not real")
    nu = float(w[1])
    Vi = np.linalg.inv(V)
    # substitute x = V00 u + V01 w, y = V10 u + V11 w
    Ax = np.zeros((K + 1, K + 1))
    Ay = np.zeros((K + 1, K + 1))
    Ax[1, 0], Ax[0, 1] = V[0, 0], V[0, 1]
    Ay[1, 0], Ay[0, 1] = V[1, 0], V[1, 1]
    jx0, jy0 = jx.copy(), jy.copy()
    jx0[0, 0] = jy0[0, 0] = 0.0
    Fx = jets.compose(jx0, Ax, Ay, K)
    Fy = jets.compose(jy0, Ax, Ay, K)
    f = Vi[0, 0] * Fx + Vi[0, 1] * Fy
    g = Vi[1, 0] * Fx + Vi[1, 1] * Fy
    h = np.zeros(K + 1)
    l = np.zeros(K + 1)
    l[1] = 1.0
    for j in range(2, K + 1):
        lj = _series_eval(f, h, K)[j]
        gj = _series_eval(g, h, K)[j]
        r = l.copy()
        r[j:] = 0.0
        hr = jets.univariate_compose(h, r, K)[j]
        # h_j (1 - nu) = [g(u, h)]_j - [h o r]_j with h_j absent on both sides
        h[j] = (gj - hr) / (1.0 - nu)
        l[j] = lj
    l = _series_eval(f, h, K)
    l[0] = 0.0
    return l, h


def classify(multipliers: Sequence, jet=None, k_max: int = K_MAX,
             tol: float = MARGIN_TOL, jet_tol: float = 1e-8):
    """Return (classification, k, l_coeffs).

    ``jet`` is either a 1-D Taylor array of the map at the point or a pair of
    bivariate Taylor arrays; it must reach order k_max + 1 and is only used
    when exactly one multiplier equals 1.
    """
    mults = [complex(m) for m in multipliers]
    on = [_on_circle(m, tol) for m in mults]
    if not any(on):
        return HYPERBOLIC, None, ()
    unit = [abs(m - 1.0) <= tol for m in mults]
    if sum(on) != 1 or sum(unit) != 1:
        return OTHER, None, ()
    if jet is None:
        raise ValidationError("a jet is needed to classify a multiplier-1 point")
    K = k_max + 1
    if isinstance(jet, tuple):
        l, _ = center_manifold_restriction(jet, K)
    else:
        l = np.zeros(K + 1)
        arr = np.asarray(jet, float)
        l[: min(len(arr), K + 1)] = arr[: K + 1]
        l[0] = 0.0
    k = _degeneracy_order(l, jet_tol)
    coeffs = tuple(float(v) for v in l[2:])
    if k is None:
        return FLAT, None, coeffs
    return DEGENERATE, k, coeffs


# ------------------------------------------------------------ 1-D exact finder

def _least_period_1d(qmap: Poly1DMap, y: float, n: int) -> int:
    for d in range(1, n + 1):
        if n % d:
            continue
        v, dv = y, 1.0
        for _ in range(d):
            dv *= float(qmap.deriv(v))
            v = float(qmap(v))
        if abs(v - y) <= 1e-8 * max(1.0, abs(dv)) * max(1.0, abs(y)):
            return d
    return n


def fixed_points_1d(coeffs: Sequence[float], n: int, budget: int = 4096,
                    k_max: int = K_MAX, tol: float = MARGIN_TOL) -> list[OrbitRecord]:
    """All real roots of q^n(y) - y, exactly counted and certified.

    Raises NonIsolatedError when the iterate polynomial is not square-free
    (this includes the identity map).
    """
    if n < 1:
        raise ValidationError("period must be >= 1")
    q = to_poly(coeffs)
    if q.degree() < 1:
        raise ValidationError("constant map")
    G = iterate(q, n, budget) - fmpq_poly([0, 1])
    if G.is_zero():
        raise NonIsolatedError("q^n is the identity: every point is fixed")
    if G.degree() == 0:
        return []
    if not is_squarefree(G):
        raise NonIsolatedError(f"q^{n}(y) - y is not square-free: multiple roots present")
    count = sturm_count(G)
    ev = IterateEvaluator(coeffs, n, G)
    bound = min(root_bound(G), escape_radius(coeffs))
    brackets = isolate_real_roots(ev, count, bound)
    roots = refine_roots(ev, brackets)
    mults = ev.derivative(roots)
    res = np.abs(ev.value(roots))
    qmap = Poly1DMap(coeffs)
    out = []
    for y, m, r in zip(roots, mults, res):
        cls, k, l = HYPERBOLIC, None, ()
        if _on_circle(m, tol):
            cls, k, l = classify([m], jet_1d(coeffs, n, float(y), k_max + 1), k_max, tol)
        out.append(OrbitRecord((float(y),), n, (float(m),), cls, float(r),
                               _least_period_1d(qmap, float(y), n), k, l))
    out.sort(key=lambda rec: rec.point)
    return out


def count_fixed_points_1d(coeffs: Sequence[float], n: int, budget: int = 4096) -> int:
    """Sturm count of the real roots of q^n(y) - y (square-free checked)."""
    G = iterate(to_poly(coeffs), n, budget) - fmpq_poly([0, 1])
    if G.is_zero():
        raise NonIsolatedError("q^n is the identity: every point is fixed")
    if not is_squarefree(G):
        raise NonIsolatedError(f"q^{n}(y) - y is not square-free: multiple roots present")
    return sturm_count(G)


def lift_limit_records(L: LimitMap, recs: Iterable[OrbitRecord]) -> list[OrbitRecord]:
    """Planar records of the limit map from 1-D records of its y-restriction.

    A point fixed by the n-th iterate has y periodic for q and x equal to
    the predecessor q^(n-1)(y); the multipliers are 0 and (q^n)'(y).
    """
    out = []
    q = Poly1DMap(L.coeffs())
    for r in recs:
        y = r.point[0]
        x = y
        for _ in range(r.period - 1):
            x = float(q(x))
        out.append(OrbitRecord((x, y), r.period, (0.0, r.multipliers[0]), r.classification,
                               r.residual, r.least_period, r.k, r.l_coeffs))
    return out


# ------------------------------------------------------------ planar Newton

@dataclass(frozen=True)
class SearchSpec:
    """Seed grid and tolerances for the planar Newton search."""

    box: tuple[float, float, float, float] = (-3.0, 3.0, -3.0, 3.0)
    seeds: int = 21
    tol: float = NEWTON_TOL
    dedup: float = DEDUP_RADIUS
    max_iter: int = 60
    k_max: int = K_MAX

    def __post_init__(self):
        x0, x1, y0, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValidationError("search box must have positive extent")
        if self.seeds < 1:
            raise ValidationError("seed grid needs at least one point")


def _newton(F: PlanarMap, p: np.ndarray, spec: SearchSpec):
    for _ in range(spec.max_iter):
        fx, fy = F.apply(p[0], p[1])
        r = np.array([float(fx), float(fy)]) - p
        scale = max(1.0, float(np.max(np.abs(p))))
        if np.max(np.abs(r)) <= spec.tol * scale:
            return p, float(np.max(np.abs(r)))
        J = F.jacobian(float(p[0]), float(p[1])) - np.eye(2)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        p = p - step
        if not np.all(np.isfinite(p)) or np.max(np.abs(p)) > 1e8:
            return None
    fx, fy = F.apply(p[0], p[1])
    r = np.array([float(fx), float(fy)]) - p
    # accept a stalled iterate if it sits at rounding level
    if np.max(np.abs(r)) <= 100 * spec.tol * max(1.0, float(np.max(np.abs(p)))):
        return p, float(np.max(np.abs(r)))
    return None


def _in_box(p, box) -> bool:
    x0, x1, y0, y1 = box
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def _is_isolated(F: PlanarMap, p: np.ndarray, spec: SearchSpec) -> bool:
    """Basin separation check: the fixed-point equation must not stay solved
    when moving off the point along the kernel of J - I."""
    J = F.jacobian(float(p[0]), float(p[1])) - np.eye(2)
    U, S, Vt = np.linalg.svd(J)
    null = [Vt[i] for i in range(2) if S[i] <= 1e-8 * max(1.0, S[0])]
    if not null:
        return True
    for v in null:
        for d in (1e-4, 1e-3, -1e-3):
            q = p + d * v
            try:
                fx, fy = F.apply(q[0], q[1])
            except (DomainError, OverflowGuardError):
                return True
            if np.max(np.abs(np.array([float(fx), float(fy)]) - q)) > 1e3 * spec.tol:
                return True
    return False


def _least_period_2d(f: PlanarMap, p: np.ndarray, n: int, tol: float) -> int:
    for d in range(1, n + 1):
        if n % d:
            continue
        try:
            x, y = Iterate(f, d).apply(p[0], p[1])
        except (DomainError, OverflowGuardError):
            continue
        if max(abs(float(x) - p[0]), abs(float(y) - p[1])) <= 1e3 * tol * max(1.0, float(np.max(np.abs(p)))):
            return d
    return n


def periodic_points_2d(f: PlanarMap, n: int, spec: SearchSpec = SearchSpec()) -> list[OrbitRecord]:
    """Fixed points of f^n in the search box from a Newton seed grid.

    Seeds whose Newton run fails or leaves the chart are dropped silently.
    Raises NonIsolatedError if a converged point is not isolated.
    """
    if n < 1:
        raise ValidationError("period must be >= 1")
    F = Iterate(f, n)
    x0, x1, y0, y1 = spec.box
    xs = np.linspace(x0, x1, spec.seeds)
    ys = np.linspace(y0, y1, spec.seeds)
    found: list[tuple[np.ndarray, float]] = []
    with np.errstate(all="ignore"):
        for sx in xs:
            for sy in ys:
                try:
                    out = _newton(F, np.array([sx, sy], float), spec)
                except (DomainError, OverflowGuardError, FloatingPointError, OverflowError):
                    continue
                if out is None or not _in_box(out[0], spec.box):
                    continue
                p, r = out
                if any(np.max(np.abs(p - q)) <= spec.dedup * max(1.0, float(np.max(np.abs(q)))) for q, _ in found):
                    continue
                found.append((p, r))
    found.sort(key=lambda t: (float(t[0][0]), float(t[0][1])))
    recs = []
    for p, r in found:
        if not _is_isolated(F, p, spec):
            raise NonIsolatedError(f"fixed points of the {n}-th iterate accumulate at {tuple(p)}")
        J = F.jacobian(float(p[0]), float(p[1]))
        ev = np.linalg.eigvals(J)
        ev = sorted((complex(v) for v in ev), key=lambda z: (abs(z), z.real, z.imag))
        mults = tuple(float(v.real) if v.imag == 0.0 else v for v in ev)
        cls, k, l = HYPERBOLIC, None, ()
        if any(_on_circle(m, MARGIN_TOL) for m in mults):
            jet = None
            if sum(abs(complex(m) - 1.0) <= MARGIN_TOL for m in mults) == 1 and \
                    sum(_on_circle(m, MARGIN_TOL) for m in mults) == 1:
                jet = F.jet(float(p[0]), float(p[1]), spec.k_max + 1)
            cls, k, l = classify(mults, jet, spec.k_max)
        recs.append(OrbitRecord((float(p[0]), float(p[1])), n, mults, cls, r,
                                _least_period_2d(f, p, n, spec.tol), k, l))
    return recs


# ------------------------------------------------------------ counts and series

def count_Pn(f, n_max: int, spec: SearchSpec | None = None, budget: int = 4096) -> Census:
    """P_n for n = 1..n_max; counts points, not orbits.

    Polynomial one-dimensional maps and the limit family use the exact
    route; other planar maps use the Newton search.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    table: dict[int, int] = {}
    orbits: dict[int, list[OrbitRecord]] = {}
    for n in range(1, n_max + 1):
        if isinstance(f, Poly1DMap):
            recs = fixed_points_1d(f.coeffs, n, budget)
        elif isinstance(f, LimitMap):
            recs = lift_limit_records(f, fixed_points_1d(f.coeffs(), n, budget))
        elif isinstance(f, PlanarMap):
            recs = periodic_points_2d(f, n, spec or SearchSpec())
        else:
            raise ValidationError(f"cannot take a census of {type(f).__name__}")
        table[n] = len(recs)
        orbits[n] = recs
    return Census(table, n_max, orbits)


def zeta_partial(census: Census | Sequence[int], T: int) -> ZetaSeries:
    """exp(sum_{n<=T} P_n z^n / n) truncated at order T, in exact rationals."""
    if not isinstance(census, Census):
        census = Census.from_counts(census)
    if T < 0:
        raise ValidationError("truncation order must be >= 0")
    if T > census.n_max:
        raise ValidationError(f"order {T} beyond the census window [1, {census.n_max}]")
    P = [0] + [census.table.get(n, 0) for n in range(1, T + 1)]
    Z = [Fraction(1)]
    # Z' = Z * S' with S = sum P_n z^n / n gives n Z_n = sum_j P_j Z_{n-j}
    for n in range(1, T + 1):
        Z.append(sum((P[j] * Z[n - j] for j in range(1, n + 1)), Fraction(0)) / n)
    return ZetaSeries(T, tuple(Z))


def growth_rate(census: Census | Sequence[int]) -> GrowthRate:
    """max_n log(P_n)/n over the census window."""
    if not isinstance(census, Census):
        census = Census.from_counts(census)
    best, arg = -math.inf, 0
    for n in sorted(census.table):
        P = census.table[n]
        if P >= 1:
            v = math.log(P) / n
            if v > best:
                best, arg = v, n
    if arg == 0:
        raise ValidationError("growth rate undefined: every count in the window is zero")
    return GrowthRate(best, census.window, arg)


# ------------------------------------------------------------ splitting

@dataclass(frozen=True)
class SplitResult:
    """Fixed points of x -> x + x^(k+1) - eps*q(x)."""

    k: int
    epsilon: float
    q_coeffs: tuple[float, ...]
    scale: float
    records: tuple[OrbitRecord, ...]
    eps_max: float
    margin: float


def default_unit_roots(m: int) -> list[float]:
    if m == 1:
        return [0.0]
    return [float(v) for v in np.linspace(-1.0, 1.0, m)]


def splitting_profile(k: int, roots: Sequence[float]) -> np.ndarray:
    """Monic P(u) of degree k+1 (ascending) vanishing at the given roots.

    Missing real roots are padded by factors u^2 + 1, which add no real
    fixed points.
    """
    m = len(roots)
    if m > k + 1:
        raise ValidationError(f"{m} roots need k >= {m - 1}; got k = {k}")
    if (k + 1 - m) % 2:
        raise ValidationError(f"{m} real roots need k + 1 - m even; use k = {m - 1} or k = {m + 1}")
    P = np.polynomial.polynomial.polyfromroots(roots) if m else np.array([1.0])
    for _ in range((k + 1 - m) // 2):
        P = np.polynomial.polynomial.polymul(P, [1.0, 0.0, 1.0])
    P = np.asarray(P, float)
    # symmetric root sets leave rounding residue where a coefficient is exactly 0
    P[np.abs(P) < 1e-13 * np.max(np.abs(P))] = 0.0
    return P


def split_degenerate(k: int, epsilon: float, roots: Sequence[float] | None = None,
                     m: int | None = None) -> SplitResult:
    """Split the k-degenerate point of x -> x + x^(k+1) into m hyperbolic ones.

    The perturbation is chosen so that x^(k+1) - eps*q(x) = s^(k+1) P(x/s)
    with P monic of degree k+1 and simple real roots ``roots`` in [-1, 1];
    the new fixed points are s*r_j with multipliers 1 + s^k P'(r_j).
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if epsilon < 0:
        raise ValidationError("epsilon must be >= 0")
    if roots is None:
        roots = default_unit_roots(k + 1 if m is None else m)
    roots = sorted(float(r) for r in roots)
    if m is not None and m != len(roots):
        raise ValidationError("m disagrees with the number of roots")
    if len(set(roots)) != len(roots):
        raise ValidationError("splitting roots must be simple")
    if any(abs(r) > 1.0 for r in roots):
        raise ValidationError("splitting roots must lie in [-1, 1]")
    P = splitting_profile(k, roots)
    dP = np.polynomial.polynomial.polyder(P)
    if epsilon == 0.0:
        l = tuple([0.0] * (k - 1) + [1.0])
        rec = OrbitRecord((0.0,), 1, (1.0,), DEGENERATE, 0.0, 1, k, l)
        return SplitResult(k, 0.0, (0.0,), 0.0, (rec,), math.inf, 0.0)
    # P = u^(k+1) + sum_j c_j u^(k+1-j); first nonzero c_d fixes the scale
    c = {j: P[k + 1 - j] for j in range(1, k + 2)}
    d = next(j for j in range(1, k + 2) if c[j] != 0.0)
    s = (epsilon / abs(c[d])) ** (1.0 / d)
    q = np.zeros(k + 1)
    for j in range(1, k + 2):
        q[k + 1 - j] = -c[j] * s ** j / epsilon
    slopes = [float(np.polynomial.polynomial.polyval(r, dP)) for r in roots]
    worst = max([-v for v in slopes if v < 0] or [0.0])
    eps_max = math.inf if worst == 0.0 else abs(c[d]) * (2.0 / worst) ** (d / k)
    if epsilon >= eps_max:
        raise ValidationError(f"epsilon {epsilon} too large: hyperbolicity lost at {eps_max:.6g}")
    recs = []
    full = np.zeros(k + 2)
    full[1] = 1.0
    full[k + 1] += 1.0
    full[: k + 1] -= epsilon * q
    for r, v in zip(roots, slopes):
        x = float(s * r)
        nu = float(1.0 + s ** k * v)
        res = abs(float(np.polynomial.polynomial.polyval(x, full)) - x)
        cls = HYPERBOLIC if not _on_circle(nu, 0.0) else OTHER
        recs.append(OrbitRecord((x,), 1, (nu,), cls, res, 1))
    margin = min(r.margin for r in recs)
    return SplitResult(k, float(epsilon), tuple(float(v) for v in q), s, tuple(recs), eps_max, margin)
