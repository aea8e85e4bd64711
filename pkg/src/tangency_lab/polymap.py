"""Vector polynomial maps: iterates, periodic points, multipliers and
Monte-Carlo hyperbolicity statistics.

Coefficients of each component are indexed by multi-indices |alpha| <= D in
graded order (total degree first, then lexicographic, highest power of x_1
first).  N = 1 uses FLINT rationals, N = 2 uses sympy polynomials over QQ.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy as sp
from flint import fmpq_poly

from .errors import BudgetError, NonIsolatedError, ValidationError
from .poly1d import (IterateEvaluator, escape_radius, from_poly, is_squarefree, isolate_real_roots,
                     iterate, refine_roots, root_bound, sturm_count, to_poly)

ITERATE_BUDGET_1D = 4096
ITERATE_BUDGET_2D = (3, 3)      # (k_max, D_max)
CERT_BUDGET = 10 ** 4
DEDUP = 1e-8
MARGIN_TOL = 1e-6
HIST_EDGES = (0.0, 1e-12, 1e-9, 1e-6, 1e-3, 1e-2, 1e-1, 1.0, math.inf)


def multi_indices(N: int, D: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(D + 1):
        out.extend(sorted((a for a in itertools.product(range(d + 1), repeat=N) if sum(a) == d),
                          reverse=True))
    return out


def monomial_count(N: int, D: int) -> int:
    """Number of multi-indices alpha in Z_+^N with |alpha| <= D."""
    return math.comb(N + D, N)


# ------------------------------------------------------------ types

@dataclass(frozen=True)
class VectorPolynomial:
    """P: K^N -> K^N with components sum_{|alpha| <= D} a_alpha x^alpha."""

    N: int
    D: int
    coeffs: tuple[tuple, ...]

    def __post_init__(self):
        if self.N < 1 or self.D < 0:
            raise ValidationError("need N >= 1 and D >= 0")
        m = monomial_count(self.N, self.D)
        c = tuple(tuple(row) for row in self.coeffs)
        if len(c) != self.N or any(len(row) != m for row in c):
            raise ValidationError(f"need {self.N} components of {m} coefficients each")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_1d(cls, ascending: Sequence) -> "VectorPolynomial":
        """N = 1 from ascending coefficients c_0 + c_1 z + ..."""
        return cls(1, len(ascending) - 1, (tuple(ascending),))

    @classmethod
    def from_terms(cls, N: int, D: int, terms: Sequence[dict]) -> "VectorPolynomial":
        idx = {a: i for i, a in enumerate(multi_indices(N, D))}
        rows = []
        for comp in terms:
            row = [0] * len(idx)
            for a, v in comp.items():
                row[idx[tuple(a)]] = v
            rows.append(tuple(row))
        return cls(N, D, tuple(rows))

    @classmethod
    def power_map(cls, N: int, D: int) -> "VectorPolynomial":
        terms = []
        for i in range(N):
            a = [0] * N
            a[i] = D
            terms.append({tuple(a): 1})
        return cls.from_terms(N, D, terms)

    @property
    def n_coeffs(self) -> int:
        return self.N * monomial_count(self.N, self.D)

    @property
    def indices(self) -> list[tuple[int, ...]]:
        return multi_indices(self.N, self.D)

    def terms(self) -> list[dict]:
        return [{a: v for a, v in zip(self.indices, row) if v != 0} for row in self.coeffs]

    def ascending(self) -> list:
        """N = 1 only: ascending coefficient list."""
        if self.N != 1:
            raise ValidationError("ascending coefficients exist for N = 1 only")
        out = [0] * (self.D + 1)
        for (d,), v in zip(self.indices, self.coeffs[0]):
            out[d] = v
        return out

    def true_degree(self) -> int:
        return max((sum(a) for comp in self.terms() for a in comp), default=0)

    def _float_terms(self):
        return [[(np.array(a), complex(v)) for a, v in comp.items()] for comp in self.terms()]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on points x of shape (N, ...) (complex allowed)."""
        x = np.asarray(x)
        out = np.zeros(x.shape, dtype=complex)
        for i, comp in enumerate(self._float_terms()):
            for a, v in comp:
                term = np.full(x.shape[1:], v, dtype=complex)
                for r, e in enumerate(a):
                    if e:
                        term = term * x[r] ** e
                out[i] += term
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Jacobian of shape (N, N, ...)."""
        x = np.asarray(x)
        out = np.zeros((self.N, self.N) + x.shape[1:], dtype=complex)
        for i, comp in enumerate(self._float_terms()):
            for a, v in comp:
                for j in range(self.N):
                    if a[j] == 0:
                        continue
                    term = np.full(x.shape[1:], v * a[j], dtype=complex)
                    for r, e in enumerate(a):
                        ee = e - 1 if r == j else e
                        if ee:
                            term = term * x[r] ** ee
                    out[i, j] += term
        return out

    def to_census_map(self):
        """Real map accepted by census.count_Pn (N = 1 or 2, real coefficients)."""
        from .census import Poly1DMap
        from .model_core import PlanarMap

        if self.N == 1:
            return Poly1DMap([float(v) for v in self.ascending()])
        if self.N != 2:
            raise ValidationError("census maps are planar or one-dimensional")
        P = self

        class _Planar(PlanarMap):
            def apply(self, x, y):
                v = P(np.array([x, y], dtype=complex)).real
                return v[0], v[1]

            def jacobian(self, x, y):
                return P.jacobian(np.array([x, y], dtype=complex)).real

        return _Planar()


@dataclass(frozen=True)
class PeriodicSolutionSet:
    """Solutions of P^(k)(x) = x with their multiplier spectra."""

    period: int
    field: str
    solutions: tuple[tuple[complex, ...], ...]
    multipliers: tuple[tuple[complex, ...], ...]
    bezout_cap: int
    complete: bool
    exact_count: int | None = None

    @property
    def count(self) -> int:
        return len(self.solutions)

    @property
    def margins(self) -> tuple[float, ...]:
        return tuple(min(abs(abs(m) - 1.0) for m in spec) for spec in self.multipliers)

    @property
    def min_margin(self) -> float:
        return min(self.margins, default=math.inf)


@dataclass(frozen=True)
class MultiplierReport:
    spectra: tuple[tuple[complex, ...], ...]
    margins: tuple[float, ...]
    min_margin: float
    nonhyperbolic: tuple[int, ...]


@dataclass(frozen=True)
class MonteCarloStats:
    N: int
    D: int
    k_max: int
    samples: int
    seed: int
    margin_tol: float
    margins: tuple[float, ...]
    flagged: tuple[int, ...]
    degenerate: tuple[int, ...]
    witness_index: int | None = None
    histogram: dict = field(default_factory=dict)

    @property
    def n_flagged(self) -> int:
        return len(self.flagged)

    @property
    def min_margin(self) -> float:
        return min(self.margins, default=math.inf)

    def to_dict(self) -> dict:
        return {
            "N": self.N, "D": self.D, "k_max": self.k_max, "samples": self.samples,
            "seed": self.seed, "margin_tol": self.margin_tol,
            "flagged": self.n_flagged, "flagged_indices": list(self.flagged),
            "degenerate_indices": list(self.degenerate),
            "witness_index": self.witness_index,
            "min_margin": None if not self.margins else self.min_margin,
            "histogram": self.histogram,
        }

    def margins_csv(self) -> str:
        lines = ["sample,margin,flagged"]
        fl = set(self.flagged)
        for i, m in enumerate(self.margins):
            lines.append(f"{i},{m!r},{int(i in fl)}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ composition

def _to_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def _sympy_components(P: VectorPolynomial, xs):
    comps = []
    for comp in P.terms():
        expr = sp.Integer(0)
        for a, v in comp.items():
            f = _to_fraction(v)
            term = sp.Rational(f.numerator, f.denominator)
            for x, e in zip(xs, a):
                term *= x ** e
            expr += term
        comps.append(sp.Poly(expr, *xs, domain=sp.QQ))
    return comps


def iterate_compose(P: VectorPolynomial, k: int) -> VectorPolynomial:
    """Exact rational coefficients of P composed with itself k times."""
    if k < 1:
        raise ValidationError("composition count must be >= 1")
    D = P.D
    if P.N == 1:
        if D >= 2 and D ** k > ITERATE_BUDGET_1D:
            raise BudgetError(f"degree {D}^{k} exceeds {ITERATE_BUDGET_1D}")
        Q = iterate(to_poly(P.ascending()), k, ITERATE_BUDGET_1D)
        c = from_poly(Q)
        Dk = max(D ** k, 1)
        c = c + [Fraction(0)] * (Dk + 1 - len(c))
        return VectorPolynomial.from_1d(c[: Dk + 1])
    if P.N == 2:
        kmax, dmax = ITERATE_BUDGET_2D
        if k > kmax or D > dmax:
            raise BudgetError(f"N=2 composition limited to k <= {kmax}, D <= {dmax}")
        xs = sp.symbols("x1 x2")
        base = _sympy_components(P, xs)
        cur = base
        for _ in range(k - 1):
            cur = [sp.Poly(b.as_expr().subs(dict(zip(xs, [c.as_expr() for c in cur])), simultaneous=True),
                           *xs, domain=sp.QQ) for b in base]
        Dk = D ** k
        terms = []
        for c in cur:
            terms.append({m: Fraction(int(v.p), int(v.q)) for m, v in c.terms()})
        return VectorPolynomial.from_terms(2, Dk, terms)
    raise BudgetError("composition implemented for N <= 2")


# ------------------------------------------------------------ periodic points

def _orbit_multipliers_1d(q: np.ndarray, dq: np.ndarray, z: np.ndarray, k: int) -> np.ndarray:
    m = np.ones_like(z)
    v = z.copy()
    for _ in range(k):
        m = m * np.polynomial.polynomial.polyval(v, dq)
        v = np.polynomial.polynomial.polyval(v, q)
    return m


def _polish_1d(q: np.ndarray, dq: np.ndarray, z: np.ndarray, k: int, iters: int = 30) -> np.ndarray:
    z = z.astype(complex)
    for _ in range(iters):
        v, m = z.copy(), np.ones_like(z)
        for _ in range(k):
            m = m * np.polynomial.polynomial.polyval(v, dq)
            v = np.polynomial.polynomial.polyval(v, q)
        d = m - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d != 0, (v - z) / d, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(z))):
            break
    return z


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    keep = []
    for p in points:
        if all(np.max(np.abs(p - r)) > tol * max(1.0, float(np.max(np.abs(r)))) for r in keep):
            keep.append(p)
    return np.array(keep)


def _complex_roots_1d(G: fmpq_poly, q: np.ndarray, k: int) -> np.ndarray:
    """All complex roots of the square-free G = q^k - id.

    FLINT isolates them in certified balls; the midpoints get one Newton
    polish on the forward iterate, kept only if it stays inside the ball.
    """
    roots = G.complex_roots()
    if sum(m for _, m in roots) != G.degree() or any(m != 1 for _, m in roots):
        raise NonIsolatedError("root isolation found a multiple root")
    z = np.array([complex(float(r.real.mid()), float(r.imag.mid())) for r, _ in roots])
    rad = np.array([float(r.real.rad()) + float(r.imag.rad()) for r, _ in roots])
    dq = np.polynomial.polynomial.polyder(q)
    zp = _polish_1d(q, dq, z, k, iters=3)
    return np.where(np.abs(zp - z) <= np.maximum(rad, 1e-15 * np.abs(z)), zp, z)


def _periodic_points_1d(P: VectorPolynomial, k: int, field_: str) -> PeriodicSolutionSet:
    asc = P.ascending()
    qq = to_poly(asc)
    if qq.degree() < 1:
        raise ValidationError("constant map")
    G = iterate(qq, k, ITERATE_BUDGET_1D) - fmpq_poly([0, 1])
    if G.is_zero():
        raise NonIsolatedError("P^(k) is the identity: every point is periodic")
    cap = P.D ** k
    if G.degree() == 0:
        return PeriodicSolutionSet(k, field_, (), (), cap, True, 0)
    if not is_squarefree(G):
        raise NonIsolatedError(f"P^({k})(z) - z is not square-free: nonisolated or multiple solutions")
    q = np.array([float(v) for v in asc])
    dq = np.polynomial.polynomial.polyder(q)
    if field_ == "real":
        exact = sturm_count(G)
        ev = IterateEvaluator(asc, k, G)
        br = isolate_real_roots(ev, exact, min(root_bound(G), escape_radius(asc)))
        z = refine_roots(ev, br).astype(complex)
    else:
        exact = G.degree()
        z = _complex_roots_1d(G, q, k)
    z = np.sort_complex(z)
    m = _orbit_multipliers_1d(q, dq, z, k)
    return PeriodicSolutionSet(k, field_, tuple((complex(v),) for v in z),
                               tuple((complex(v),) for v in m), cap, True, exact)


def _iterate_with_jacobian(P: VectorPolynomial, x: np.ndarray, k: int):
    N = P.N
    J = np.broadcast_to(np.eye(N, dtype=complex)[:, :, None], (N, N, x.shape[1])).copy()
    v = x
    for _ in range(k):
        Jp = P.jacobian(v)
        J = np.einsum("ijm,jlm->ilm", Jp, J)
        v = P(v)
    return v, J


def _periodic_points_nd(P: VectorPolynomial, k: int, field_: str, seeds: int, seed: int,
                        radius: float) -> PeriodicSolutionSet:
    """Newton from seeded random starts on P^(k)(x) - x = 0; a lower bound."""
    kmax, dmax = ITERATE_BUDGET_2D
    if P.N == 2 and (k > kmax or P.D > dmax):
        raise BudgetError(f"N=2 enumeration limited to k <= {kmax}, D <= {dmax}")
    N = P.N
    rng = np.random.default_rng(seed)
    x = rng.uniform(-radius, radius, (N, seeds)).astype(complex)
    if field_ == "complex":
        x = x + 1j * rng.uniform(-radius, radius, (N, seeds))
    eye = np.eye(N)[:, :, None]
    for _ in range(80):
        with np.errstate(all="ignore"):
            v, J = _iterate_with_jacobian(P, x, k)
            F = v - x
            A = np.moveaxis(J - eye, 2, 0)
            ok = np.isfinite(A).all(axis=(1, 2)) & (np.abs(np.linalg.det(np.where(np.isfinite(A), A, 0))) > 1e-300)
            step = np.zeros_like(x)
            if ok.any():
                step[:, ok] = np.linalg.solve(A[ok], F[:, ok].T[:, :, None])[:, :, 0].T
        x = x - step
        if field_ == "real":
            x = x.real.astype(complex)
        x = np.where(np.isfinite(x), x, 0.0)
    v, J = _iterate_with_jacobian(P, x, k)
    res = np.max(np.abs(v - x), axis=0)
    good = np.isfinite(res) & (res <= 1e-10 * np.maximum(1.0, np.max(np.abs(x), axis=0)))
    pts = x[:, good].T
    pts = _dedup(pts, DEDUP) if len(pts) else np.zeros((0, N))
    pts = sorted((tuple(complex(round(c.real, 14), round(c.imag, 14)) for c in p) for p in pts),
                 key=lambda p: tuple((c.real, c.imag) for c in p))
    mults = []
    for p in pts:
        _, Jp = _iterate_with_jacobian(P, np.array(p)[:, None], k)
        mults.append(tuple(complex(e) for e in np.linalg.eigvals(Jp[:, :, 0])))
    return PeriodicSolutionSet(k, field_, tuple(pts), tuple(mults), P.D ** (k * N), False, None)


def periodic_points(P: VectorPolynomial, k: int, field: str = "complex", seeds: int = 4000,
                    seed: int = 0, radius: float = 2.0) -> PeriodicSolutionSet:
    """Solutions of P^(k)(x) = x.

    N = 1: exact count (degree or Sturm) and certified roots.  N >= 2: Newton
    from random starts, flagged incomplete.
    """
    if field not in ("real", "complex"):
        raise ValidationError("field must be 'real' or 'complex'")
    if k < 1:
        raise ValidationError("period must be >= 1")
    if P.N == 1:
        if P.D >= 2 and P.D ** k > ITERATE_BUDGET_1D:
            raise BudgetError(f"degree {P.D}^{k} exceeds {ITERATE_BUDGET_1D}")
        return _periodic_points_1d(P, k, field)
    return _periodic_points_nd(P, k, field, seeds, seed, radius)


def multiplier_spectrum(P: VectorPolynomial, sols: PeriodicSolutionSet, tol: float = MARGIN_TOL) -> MultiplierReport:
    """Eigenvalues of the chain-rule Jacobian of P^(k) at each solution."""
    spectra = []
    for p in sols.solutions:
        _, J = _iterate_with_jacobian(P, np.array(p, dtype=complex)[:, None], sols.period)
        spectra.append(tuple(complex(e) for e in np.linalg.eigvals(J[:, :, 0])))
    margins = tuple(min(abs(abs(m) - 1.0) for m in s) for s in spectra)
    bad = tuple(i for i, m in enumerate(margins) if m < tol)
    return MultiplierReport(tuple(spectra), margins, min(margins, default=math.inf), bad)


def bezout_check(P: VectorPolynomial, k: int, field: str = "complex") -> bool:
    """Isolated solutions of P^(k)(x) = x never exceed D^(kN)."""
    sols = periodic_points(P, k, field)
    return sols.count <= P.D ** (k * P.N)


# ------------------------------------------------------------ power map

@dataclass(frozen=True)
class PowerMapCertificate:
    N: int
    D: int
    k: int
    count: int
    expected: int
    multiplier_moduli: tuple[float, ...]
    all_hyperbolic: bool
    cross_count: int | None
    cross_moduli_agree: bool | None

    @property
    def ok(self) -> bool:
        agree = self.cross_count is None or (self.cross_count == self.count and bool(self.cross_moduli_agree))
        return self.count == self.expected and self.all_hyperbolic and agree


def power_map_certificate(N: int, D: int, k: int, cross_check: bool = True, tol: float = 1e-9) -> PowerMapCertificate:
    """Periodic points of (z_1^D, ..., z_N^D) written down analytically.

    Each coordinate is 0 or a (D^k - 1)-th root of unity; the multiplier of
    P^(k) in that coordinate is 0 or D^k.
    """
    if D < 2:
        raise ValidationError("power map needs D >= 2")
    if D ** (N * k) > CERT_BUDGET:
        raise BudgetError(f"D^(Nk) = {D ** (N * k)} exceeds {CERT_BUDGET}")
    Dk = D ** k
    coord = [(0.0, 0.0)] + [(np.exp(2j * np.pi * j / (Dk - 1)), float(Dk)) for j in range(Dk - 1)]
    pts = list(itertools.product(coord, repeat=N))
    moduli = []
    hyp = True
    for p in pts:
        for _, m in p:
            moduli.append(abs(m))
            hyp &= abs(abs(m) - 1.0) > 0
    moduli.sort()
    cross_count = agree = None
    if cross_check and N <= 2:
        sols = periodic_points(VectorPolynomial.power_map(N, D), k, "complex")
        cross_count = sols.count
        got = sorted(abs(m) for spec in sols.multipliers for m in spec)
        agree = len(got) == len(moduli) and all(abs(a - b) <= tol * max(1.0, b) for a, b in zip(got, moduli))
    return PowerMapCertificate(N, D, k, len(pts), D ** (N * k), tuple(moduli), hyp, cross_count, agree)


# ------------------------------------------------------------ Monte Carlo

NONHYPERBOLIC_WITNESS = (-0.75, 0.0, 1.0, 0.0)   # z^2 - 3/4, as a cubic


def _sample_margin_1d(asc: Sequence[float], k_max: int) -> tuple[float, bool]:
    """Min unit-circle margin over all periodic points of period <= k_max.

    Returns (margin, degenerate); a non-square-free iterate (multiple
    periodic point) has margin 0 by definition.
    """
    q = np.array([float(v) for v in asc])
    while len(q) > 1 and q[-1] == 0.0:
        q = q[:-1]
    if len(q) < 3:
        raise ValidationError("Monte-Carlo sample has degree < 2")
    dq = np.polynomial.polynomial.polyder(q)
    qq = to_poly(list(q))
    best = math.inf
    # periods dividing a larger one are covered by it
    ks = [k for k in range(1, k_max + 1) if not any(m % k == 0 for m in range(k + 1, k_max + 1))]
    for k in ks:
        G = iterate(qq, k, ITERATE_BUDGET_1D) - fmpq_poly([0, 1])
        if not is_squarefree(G):
            return 0.0, True
        z = _complex_roots_1d(G, q, k)
        m = _orbit_multipliers_1d(q, dq, z, k)
        best = min(best, float(np.min(np.abs(np.abs(m) - 1.0))))
    return best, False


def _histogram(margins) -> dict:
    if not margins:
        return {}
    counts, _ = np.histogram(np.asarray(margins), bins=np.array(HIST_EDGES))
    labels = [f"[{a:g},{b:g})" for a, b in zip(HIST_EDGES, HIST_EDGES[1:])]
    return {lab: int(c) for lab, c in zip(labels, counts)}


def monte_carlo_hyperbolicity(N: int = 1, D: int = 3, k_max: int = 3, samples: int = 1000,
                              seed: int = 0, margin_tol: float = MARGIN_TOL,
                              witness: Sequence[float] | None = None) -> MonteCarloStats:
    """Margins of random polynomials with coefficients uniform on [-1, 1].

    Sample i draws from its own stream spawned off the master seed, so the
    statistics do not depend on evaluation order.  ``witness`` (ascending
    coefficients) is appended as one extra sample.
    """
    if N != 1:
        raise ValidationError("Monte-Carlo census is implemented for N = 1")
    if samples < 0 or k_max < 1 or D < 2:
        raise ValidationError("need samples >= 0, k_max >= 1, D >= 2")
    if D ** k_max > ITERATE_BUDGET_1D:
        raise BudgetError(f"D^k_max = {D ** k_max} exceeds {ITERATE_BUDGET_1D}")
    m = monomial_count(N, D)
    streams = np.random.SeedSequence(seed).spawn(samples)
    polys = [np.random.default_rng(s).uniform(-1.0, 1.0, m) for s in streams]
    widx = None
    if witness is not None:
        w = list(witness) + [0.0] * (m - len(witness))
        if len(w) != m:
            raise ValidationError(f"witness needs at most {m} coefficients")
        widx = len(polys)
        polys.append(np.array(w, float))
    margins, flagged, degenerate = [], [], []
    for i, c in enumerate(polys):
        mg, deg = _sample_margin_1d(c, k_max)
        margins.append(mg)
        if deg:
            degenerate.append(i)
        if mg < margin_tol:
            flagged.append(i)
    return MonteCarloStats(N, D, k_max, samples, seed, margin_tol, tuple(margins), tuple(flagged),
                           tuple(degenerate), widx, _histogram(margins))
