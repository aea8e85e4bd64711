"""Exact univariate polynomial tools on top of FLINT.

Coefficient lists are ascending.  Floats are converted to the exact binary
rational they denote, so "exact" always means exact for the given input.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from flint import arb, ctx, fmpq, fmpq_poly

from .errors import BudgetError, NonIsolatedError, ValidationError

MAX_ITERATE_DEGREE = 4096


def to_fmpq(v) -> fmpq:
    if isinstance(v, fmpq):
        return v
    f = Fraction(v) if not isinstance(v, Fraction) else v
    return fmpq(f.numerator, f.denominator)


def to_poly(coeffs: Sequence) -> fmpq_poly:
    return fmpq_poly([to_fmpq(c) for c in coeffs])


def from_poly(p: fmpq_poly) -> list[Fraction]:
    return [Fraction(int(c.p), int(c.q)) for c in p.coeffs()]


def iterate(q: fmpq_poly, n: int, budget: int = MAX_ITERATE_DEGREE) -> fmpq_poly:
    """Exact coefficients of q composed with itself n times."""
    if n < 1:
        raise ValidationError("iterate count must be >= 1")
    d = q.degree()
    if d >= 2 and d ** n > budget:
        raise BudgetError(f"degree {d}^{n} exceeds budget {budget}")
    Q = q
    for _ in range(n - 1):
        Q = q(Q)
    return Q


def is_squarefree(p: fmpq_poly) -> bool:
    return p.gcd(p.derivative()).degree() == 0


def _sign_at_inf(p: fmpq_poly, positive: bool) -> int:
    lc = p.leading_coefficient()
    s = 1 if lc > 0 else -1
    if not positive and p.degree() % 2 == 1:
        s = -s
    return s


def sturm_sequence(p: fmpq_poly) -> list[fmpq_poly]:
    seq = [p, p.derivative()]
    while seq[-1].degree() > 0:
        r = seq[-2] % seq[-1]
        if r.is_zero():
            break
        seq.append(-r)
    return seq


def _variations(signs) -> int:
    s = [v for v in signs if v != 0]
    return sum(1 for a, b in zip(s, s[1:]) if a != b)


def sturm_count(p: fmpq_poly, seq: list[fmpq_poly] | None = None) -> int:
    """Number of distinct real roots (Sturm's theorem on the whole line)."""
    if p.degree() < 1:
        return 0
    seq = seq or sturm_sequence(p)
    lo = _variations([_sign_at_inf(s, False) for s in seq])
    hi = _variations([_sign_at_inf(s, True) for s in seq])
    return lo - hi


def root_bound(p: fmpq_poly) -> float:
    """Fujiwara bound on the modulus of every complex root."""
    c = p.coeffs()
    d = p.degree()
    lc = c[d]

    def log2abs(v: fmpq) -> float:
        return math.log2(abs(int(v.p))) - math.log2(int(v.q))

    llc = log2abs(lc)
    best = -math.inf
    for i in range(1, d + 1):
        a = c[d - i]
        if a == 0:
            continue
        la = log2abs(a) - llc - (1.0 if i == d else 0.0)
        best = max(best, la / i)
    if best == -math.inf:
        return 1.0
    return 2.0 * 2.0 ** best


# ------------------------------------------------------------ evaluation

def _horner_float(coeffs: np.ndarray, y: np.ndarray) -> np.ndarray:
    acc = np.full_like(y, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * y + c
    return acc


class IterateEvaluator:
    """Evaluates G(y) = q^n(y) - y by forward iteration of q.

    Floats for scanning, arb balls for certified signs, exact rationals as a
    last resort.
    """

    def __init__(self, q_coeffs: Sequence, n: int, G: fmpq_poly | None = None):
        self.qf = np.array([float(c) for c in q_coeffs])
        self.qd = np.array([i * float(c) for i, c in enumerate(q_coeffs)][1:] or [0.0])
        self.qq = to_poly(q_coeffs)
        self.n = n
        self._G = G

    @property
    def G(self) -> fmpq_poly:
        if self._G is None:
            self._G = iterate(self.qq, self.n) - fmpq_poly([0, 1])
        return self._G

    def value(self, y):
        v = np.asarray(y, float)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.n):
                v = _horner_float(self.qf, v)
        return v - y

    def derivative(self, y):
        """(q^n)'(y) by the chain rule, vectorized."""
        v = np.asarray(y, float)
        d = np.ones_like(v)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.n):
                d = d * _horner_float(self.qd, v)
                v = _horner_float(self.qf, v)
        return d

    def exact_sign(self, y: float) -> int:
        prec = 64 + 8 * self.n
        while prec <= 8192:
            old = ctx.prec
            ctx.prec = prec
            try:
                coeffs = [arb(c) for c in self.qq.coeffs()]
                x0 = arb(y)
                v = x0
                for _ in range(self.n):
                    acc = arb(0)
                    for c in coeffs[::-1]:
                        acc = acc * v + c
                    v = acc
                g = v - x0
                if g > 0:
                    return 1
                if g < 0:
                    return -1
            finally:
                ctx.prec = old
            prec *= 4
        # fall back to exact rational arithmetic (hits exact roots)
        val = self.G(to_fmpq(y))
        return 0 if val == 0 else (1 if val > 0 else -1)


def escape_radius(q_coeffs: Sequence) -> float:
    """Radius outside which |q(y)| > |y|, so no periodic point lives there."""
    c = [abs(float(v)) for v in q_coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    if len(c) <= 2:
        return math.inf
    return max(1.0, (1.0 + sum(c[:-1])) / c[-1])


def _refine_extrema(ev: IterateEvaluator, grid: np.ndarray, levels: int = 40, sub: int = 33) -> np.ndarray:
    """Extra sample points inside cells that hide a local extremum of G.

    Two close roots sit on either side of an extremum without producing a
    sign change on a coarse grid, so such cells are subdivided recursively.
    """
    extra = [grid]
    t = np.linspace(0.0, 1.0, sub)
    a, b = grid[:-1], grid[1:]
    pts = grid[None, :]
    for _ in range(levels):
        v = ev.value(pts)
        d = ev.derivative(pts) - 1.0
        sv, sd = np.sign(v), np.sign(d)
        turn = (sd[:, :-1] != sd[:, 1:]) & (sv[:, :-1] == sv[:, 1:])
        rows, cols = np.nonzero(turn)
        if rows.size == 0:
            break
        a = pts[rows, cols]
        b = pts[rows, cols + 1]
        keep = (b - a) > 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))
        a, b = a[keep], b[keep]
        if a.size == 0:
            break
        pts = a[:, None] + (b - a)[:, None] * t[None, :]
        extra.append(pts.ravel())
    return np.unique(np.concatenate(extra))


def isolate_real_roots(ev: IterateEvaluator, expected: int, bound: float,
                       start: int = 4097, max_points: int = 1 << 20):
    """Certified brackets for the real roots of a square-free G.

    Returns a list of (lo, hi) with exact sign change or an exact root at
    lo == hi.  The scan is refined until the number of certified roots
    equals ``expected`` (the Sturm count), which makes every bracket hold
    exactly one root.
    """
    if expected == 0:
        return []
    B = float(bound) * (1 + 1e-12) + 1e-300
    m = start
    while m <= max_points:
        grid = _refine_extrema(ev, np.linspace(-B, B, m))
        vals = ev.value(grid)
        fs = np.where(np.isnan(vals), 0.0, np.sign(vals))
        cand = {0, len(grid) - 1}
        for i in np.flatnonzero(fs[:-1] != fs[1:]):
            cand.add(int(i))
            cand.add(int(i) + 1)
        pts = sorted(cand)
        signs = {i: ev.exact_sign(float(grid[i])) for i in pts}
        brackets = []
        prev = None
        for i in pts:
            s = signs[i]
            if s == 0:
                brackets.append((float(grid[i]), float(grid[i])))
                continue
            if prev is not None and signs[prev] != s:
                # skip if the root was already recorded as an exact hit
                if not (brackets and brackets[-1][0] == brackets[-1][1] and grid[prev] < brackets[-1][0] < grid[i]):
                    brackets.append((float(grid[prev]), float(grid[i])))
            prev = i
        if len(brackets) == expected:
            return brackets
        if len(brackets) > expected:
            raise NonIsolatedError("more sign changes than Sturm roots: inconsistent input")
        m = 4 * m - 3
    raise NonIsolatedError(f"could not separate {expected} real roots on a grid of {max_points} points")


def refine_roots(ev: IterateEvaluator, brackets, iters: int = 200) -> np.ndarray:
    """Safeguarded Newton inside certified brackets, all brackets at once."""
    lo = np.array([b[0] for b in brackets], float)
    hi = np.array([b[1] for b in brackets], float)
    if lo.size == 0:
        return lo
    slo = np.sign(ev.value(lo))
    x = np.where(lo == hi, lo, 0.5 * (lo + hi))
    done = (lo == hi) | (slo == 0)
    x[slo == 0] = lo[slo == 0]
    eps = np.finfo(float).eps
    for _ in range(iters):
        if done.all():
            break
        act = ~done
        xa = x[act]
        fx = ev.value(xa)
        d = ev.derivative(xa) - 1.0
        same = np.sign(fx) == slo[act]
        la = np.where(same, xa, lo[act])
        ha = np.where(same, hi[act], xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - fx / d
        bad = ~np.isfinite(xn) | (xn <= la) | (xn >= ha)
        xn = np.where(bad, 0.5 * (la + ha), xn)
        conv = (fx == 0.0) | (np.abs(xn - xa) <= 4 * eps * np.maximum(1.0, np.abs(xa))) \
            | (ha - la <= 2 * eps * np.maximum(1.0, np.abs(xa)))
        xn = np.where(fx == 0.0, xa, xn)
        lo[act], hi[act], x[act] = la, ha, xn
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    return x


def refine_root(ev: IterateEvaluator, lo: float, hi: float, iters: int = 200) -> float:
    """Safeguarded Newton inside a single certified bracket."""
    return float(refine_roots(ev, [(lo, hi)], iters)[0])
