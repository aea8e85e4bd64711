"""Experiment configuration, the periodic-orbit cascade and reproducible runs.

Configs are flat ``key = value`` files.  Every experiment has a schema of
typed keys with defaults; unknown keys are rejected.  Results are rendered
deterministically (no timing, sorted keys, shortest round-trip floats) so a
rerun with the same config and seed reproduces the output bytes; timing
goes into the manifest only.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, kvfile
from .census import (DEGENERATE, HYPERBOLIC, K_MAX, MARGIN_TOL as CENSUS_MARGIN_TOL, Poly1DMap,
                     SearchSpec, classify, count_Pn, fixed_points_1d, growth_rate, periodic_points_2d,
                     split_degenerate, zeta_partial)
from .errors import LabError, SchemaError, ValidationError
from .model_core import LimitMap, PlanarMap
from .renorm import (GridSpec, RescalePlan, convergence_sweep, desk_model, exact_limit_model,
                     rescaled_eval, scheduled_model)

# ------------------------------------------------------------ sequences a_n

def _preset_nn(n: int) -> int:
    return n ** n


def _preset_2n(n: int) -> int:
    return 2 ** n


def _preset_zero(n: int) -> int:
    return 0


PRESETS: dict[str, Callable[[int], int]] = {"n^n": _preset_nn, "2^n": _preset_2n, "zero": _preset_zero}


def sequence_from_spec(name: str, values: Sequence[int] = ()) -> Callable[[int], int]:
    """a_n from a preset name or, for ``list``, from values a_1, a_2, ..."""
    if name == "list":
        vals = [int(v) for v in values]
        if any(v < 0 for v in vals):
            raise ValidationError("a_n must be non-negative")

        def seq(n: int) -> int:
            if not 1 <= n <= len(vals):
                raise ValidationError(f"a_{n} not given: list has {len(vals)} entries")
            return vals[n - 1]

        return seq
    if name not in PRESETS:
        raise ValidationError(f"unknown a_n preset {name!r}; choose from {sorted(PRESETS) + ['list']}")
    return PRESETS[name]


# ------------------------------------------------------------ cascade

@dataclass(frozen=True)
class CascadeSpec:
    """Target growth a_n and the splitting setup for each stage."""

    preset: str = "list"
    values: tuple[int, ...] = (0, 0, 2)
    periods: tuple[int, ...] = (3,)
    k: int = 5
    epsilon: float = 0.2
    lam: float = 0.01
    mu: float = 2.0
    N_global: int = 1
    seed: int = 0
    margin_tol: float = 1e-4
    probe_fraction: float = 0.5

    def a(self, n: int) -> int:
        return sequence_from_spec(self.preset, self.values)(n)


@dataclass(frozen=True)
class CascadeStage:
    period: int
    n: int
    a_n: int
    requested: int
    achieved: int
    ratio: float | None
    break_holds: bool
    degenerate: dict
    epsilon: float | None
    scale: float | None
    points: tuple[float, ...]
    multipliers: tuple[float, ...]
    min_margin: float | None
    probe: dict
    model_check: dict
    passed: bool

    def to_dict(self) -> dict:
        return {
            "period": self.period, "n": self.n, "a_n": self.a_n, "requested": self.requested,
            "achieved": self.achieved, "ratio": self.ratio, "break_holds": self.break_holds,
            "degenerate": self.degenerate, "epsilon": self.epsilon, "scale": self.scale,
            "points": list(self.points), "multipliers": list(self.multipliers),
            "min_margin": self.min_margin, "probe": self.probe, "model_check": self.model_check,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class CascadeReport:
    spec: CascadeSpec
    stages: tuple[CascadeStage, ...]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    def to_dict(self) -> dict:
        sp = self.spec
        return {
            "spec": {"preset": sp.preset, "values": list(sp.values), "periods": list(sp.periods),
                     "k": sp.k, "epsilon": sp.epsilon, "lambda": sp.lam, "mu": sp.mu,
                     "N": sp.N_global, "seed": sp.seed, "margin_tol": sp.margin_tol,
                     "probe_fraction": sp.probe_fraction},
            "stages": [s.to_dict() for s in self.stages],
            "passed": self.passed,
        }


class _RescaledReturn(PlanarMap):
    """Rescaled return map of a scheduled model with a finite-difference Jacobian."""

    def __init__(self, model, plan, offset, h: float = 1e-6):
        self.model, self.plan, self.offset, self.h = model, plan, offset, h

    def apply(self, x, y):
        return rescaled_eval(self.model, self.plan, x, y, self.offset)

    def jacobian(self, x, y):
        h = self.h
        fx = (np.array(self.apply(x + h, y)) - np.array(self.apply(x - h, y))) / (2 * h)
        fy = (np.array(self.apply(x, y + h)) - np.array(self.apply(x, y - h))) / (2 * h)
        return np.column_stack([fx, fy]).astype(float)


def _probe_coeffs(rng: np.random.Generator, k: int, eta: float, radius: float, half_gap: float) -> np.ndarray:
    """Random polynomial of degree <= k with weighted C^1 size eta on [-radius, radius].

    Size = sup|p| / half_gap + sup|p'|, bounded through the coefficients;
    measuring the C^0 part against half the point spacing makes the size
    independent of the chart's length unit.
    """
    c = rng.uniform(-1.0, 1.0, k + 1)
    a0 = sum(abs(v) * radius ** i for i, v in enumerate(c))
    a1 = sum(i * abs(v) * radius ** (i - 1) for i, v in enumerate(c) if i)
    return c * (eta / (a0 / half_gap + a1))


def _stage(spec: CascadeSpec, period: int, rng: np.random.Generator) -> CascadeStage:
    k = spec.k
    n = period - spec.N_global
    if n < 1:
        raise ValidationError(f"period {period} must exceed the global-map length {spec.N_global}")
    a_n = spec.a(period)
    requested = period * a_n
    if requested == 0:
        return CascadeStage(period, n, a_n, 0, 0, None, True, {}, None, None, (), (), None,
                            {}, {}, True)
    m = requested if (k + 1 - requested) % 2 == 0 else requested + 1
    if m > k + 1:
        raise ValidationError(f"{requested} orbits at period {period} need k >= {requested - 1}; got k = {k}")

    # degenerate configuration: limit map y -> y + y^(k+1) realised exactly by the model
    kk = k + 1
    M = [0.0] * kk
    M[1] = 1.0
    L = LimitMap(kk, M)
    cls, kdeg, l = classify([0.0, 1.0], L.jet(0.0, 0.0, k + 1), K_MAX if k <= K_MAX else k)
    degenerate = {"classification": cls, "k": kdeg, "l": list(l)}
    if cls != DEGENERATE or kdeg != k:
        raise ValidationError(f"expected a {k}-degenerate point, found {cls} (k={kdeg})")

    split = split_degenerate(k, spec.epsilon, m=m)
    M2 = [M[i] - spec.epsilon * split.q_coeffs[i] for i in range(kk)]
    L2 = LimitMap(kk, M2)
    recs = fixed_points_1d(L2.coeffs(), 1)
    achieved = sum(1 for r in recs if r.classification == HYPERBOLIC)
    pts = tuple(r.point[0] for r in recs)
    mults = tuple(float(r.multipliers[0]) for r in recs)
    # two-dimensional multipliers are (0, nu): the margin is set by nu
    margins = [min(1.0, abs(abs(v) - 1.0)) for v in mults]
    min_margin = min(margins)

    # persistence probe
    gaps = np.diff(np.sort(pts))
    half_gap = float(np.min(gaps)) / 2 if len(gaps) else 1.0
    radius = float(np.max(np.abs(pts))) + half_gap
    eta = spec.probe_fraction * min_margin
    dq = _probe_coeffs(rng, k, eta, radius, half_gap)
    M3 = [M2[i] + (dq[i] if i < len(dq) else 0.0) for i in range(kk)]
    probe_recs = fixed_points_1d(LimitMap(kk, M3).coeffs(), 1)
    probe_hyp = sum(1 for r in probe_recs if r.classification == HYPERBOLIC)
    probe = {"eta": eta, "coeffs": [float(v) for v in dq], "count": len(probe_recs),
             "hyperbolic": probe_hyp,
             "min_margin": min((min(1.0, r.margin) for r in probe_recs), default=None),
             "unchanged": len(probe_recs) == len(recs) and probe_hyp == achieved}

    # the points as period-(n+N) points of the model itself
    model = exact_limit_model(spec.lam, spec.mu, k=kk)
    m2, plan, off, _ = scheduled_model(model, L2, n)
    P = np.array(pts)
    X, Y = rescaled_eval(m2, plan, P, P, off)
    resid = float(np.max(np.hypot(X - P, Y - P)))
    F = _RescaledReturn(m2, plan, off)
    box = radius + 0.05
    found = periodic_points_2d(F, 1, SearchSpec(box=(-box, box, -box, box), seeds=25, dedup=1e-8))
    model_check = {"residual": resid, "newton_count": len(found),
                   "raw_points": [[float(a), float(b)] for a, b in zip(*plan.inverse(P, P))]}

    ratio = achieved / a_n
    holds = ratio >= period
    passed = holds and achieved >= requested and min_margin > spec.margin_tol and probe["unchanged"]
    return CascadeStage(period, n, a_n, requested, achieved, ratio, holds, degenerate, spec.epsilon,
                        split.scale, pts, mults, min_margin, probe, model_check, passed)


def run_cascade(spec: CascadeSpec, stages: int | None = None) -> CascadeReport:
    """Create period-n_i hyperbolic points by splitting a degenerate one.

    Per stage: classify the degenerate fixed point of the limit return map,
    split it into m >= n_i a_{n_i} hyperbolic points, count them exactly,
    check #points / a_n >= n, and recount after a seeded probe perturbation.
    """
    periods = list(spec.periods if stages is None else spec.periods[:stages])
    if len(periods) > 2:
        raise ValidationError("desk-scale cascade runs at most 2 stages")
    if sorted(set(periods)) != periods:
        raise ValidationError("stage periods must increase")
    streams = np.random.SeedSequence(spec.seed).spawn(max(len(periods), 1))
    out = [_stage(spec, p, np.random.default_rng(s)) for p, s in zip(periods, streams)]
    return CascadeReport(spec, tuple(out))


# ------------------------------------------------------------ schemas

def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    return tuple(kvfile.parse_list(v))


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(",") if x.strip())


def _str(v: str) -> str:
    return v.strip()


SCHEMAS: dict[str, dict[str, tuple[Callable, object]]] = {
    "renorm": {
        "model": (_str, "desk"), "k": (_int, 2), "M": (_floats, (-2.0, 0.0)),
        "lambda": (_float, 0.01), "mu": (_float, 2.0), "sigma": (_float, 1.0),
        "n_min": (_int, 2), "n_max": (_int, 30), "grid_lo": (_float, -2.0), "grid_hi": (_float, 2.0),
        "grid_step": (_float, 0.1), "r": (_int, 2), "d0_tol": (_float, 0.05), "d1_tol": (_float, 0.1),
    },
    "census": {
        "map": (_str, "poly1d"), "coeffs": (_floats, (-2.0, 0.0, 1.0)), "k": (_int, 2),
        "n_max": (_int, 10), "budget": (_int, 4096), "margin_tol": (_float, CENSUS_MARGIN_TOL),
    },
    "tower": {
        "k": (_int, 2), "n1": (_int, 10), "lambda": (_float, 0.01), "mu": (_float, 2.0),
        "c": (_float, 1.0), "r": (_float, 2.0),
    },
    "tangency": {
        "k": (_int, 2), "n": (_int, 10), "max_newton": (_int, 50), "lambda": (_float, 0.01),
        "mu": (_float, 2.0), "g3": (_float, 0.5), "tol": (_float, 1e-8),
    },
    "polymap": {
        "N": (_int, 1), "D": (_int, 3), "k_max": (_int, 3), "samples": (_int, 1000),
        "margin_tol": (_float, 1e-6), "witness": (_bool, False),
    },
    "cascade": {
        "preset": (_str, "list"), "values": (_ints, (0, 0, 2)), "periods": (_ints, (3,)),
        "k": (_int, 5), "epsilon": (_float, 0.2), "lambda": (_float, 0.01), "mu": (_float, 2.0),
        "margin_tol": (_float, 1e-4), "probe_fraction": (_float, 0.5),
    },
}

TOLERANCE_KEYS = {
    "renorm": ("d0_tol", "d1_tol"),
    "census": ("margin_tol",),
    "tower": (),
    "tangency": ("tol",),
    "polymap": ("margin_tol",),
    "cascade": ("margin_tol", "probe_fraction"),
}

FIXED_TOLERANCES = {
    "census": {"newton_tol": 1e-12, "dedup_radius": 1e-11},
    "tangency": {"certificate_min": 1e-6, "fd_tol": 1e-6, "scaling_tol": 0.15},
    "tower": {"interval_precision_bits": 96},
    "polymap": {"dedup": 1e-8},
    "cascade": {"newton_dedup": 1e-8},
    "renorm": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters."""

    experiment: str
    params: dict
    seed: int = 0
    out: str | None = None
    fmt: str = "json"
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, experiment: str, raw: dict[str, str], seed: int | None = None,
                     out: str | None = None, fmt: str | None = None) -> "ExperimentConfig":
        if experiment not in SCHEMAS:
            raise SchemaError(f"unknown experiment {experiment!r}")
        raw = dict(raw)
        if "experiment" in raw and raw.pop("experiment") != experiment:
            raise SchemaError("config names a different experiment")
        if "seed" in raw:
            s = raw.pop("seed")
            seed = int(s) if seed is None else seed
        fmt = fmt or raw.pop("format", None) or "json"
        raw.pop("format", None)
        schema = SCHEMAS[experiment]
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise SchemaError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
        params = {}
        for key, (conv, default) in schema.items():
            if key in raw:
                try:
                    params[key] = conv(raw[key])
                except (TypeError, ValueError) as exc:
                    raise SchemaError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from None
            else:
                params[key] = default
        seed = 0 if seed is None else int(seed)
        if not 0 <= seed < 2 ** 64:
            raise SchemaError("seed must be an unsigned 64-bit integer")
        if fmt not in ("json", "csv"):
            raise SchemaError(f"format must be json or csv, got {fmt!r}")
        tol = {k: params[k] for k in TOLERANCE_KEYS[experiment]}
        tol.update(FIXED_TOLERANCES[experiment])
        return cls(experiment, params, seed, out, fmt, tol)

    @classmethod
    def from_text(cls, experiment: str, text: str, **kw) -> "ExperimentConfig":
        return cls.from_mapping(experiment, kvfile.parse(text), **kw)

    def echo(self) -> dict:
        def enc(v):
            return list(v) if isinstance(v, tuple) else v

        return {k: enc(v) for k, v in self.params.items()}


def require_keys(raw: dict[str, str], keys: Sequence[str]) -> None:
    for key in keys:
        if key not in raw:
            raise SchemaError(f"missing required key {key!r}")


# ------------------------------------------------------------ experiments

@dataclass
class ExperimentResult:
    experiment: str
    data: dict
    tables: dict[str, list[list]]      # name -> rows, first row is the header
    passed: bool

    def render(self, fmt: str) -> dict[str, str]:
        """File name -> deterministic content."""
        files = {}
        if fmt == "json":
            files["result.json"] = dumps_json(self.data)
        else:
            main = next(iter(self.tables))
            files["result.csv"] = _csv(self.tables[main])
        for name, rows in self.tables.items():
            if fmt == "json" or name != next(iter(self.tables)):
                files[f"{name}.csv"] = _csv(rows)
        return files


def _enc(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.floating,)):
        return _enc(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, dict):
        return {str(k): _enc(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_enc(x) for x in v]
    return v


def dumps_json(obj) -> str:
    return json.dumps(_enc(obj), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _run_renorm(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    if p["model"] == "desk":
        model = desk_model(p["lambda"], p["mu"], p["sigma"], p["k"])
    elif p["model"] == "exact":
        model = exact_limit_model(p["lambda"], p["mu"], p["k"])
    else:
        raise SchemaError(f"bad value for 'model': {p['model']!r} (desk or exact)")
    L = LimitMap(p["k"], p["M"])
    rep = convergence_sweep(model, L, range(p["n_min"], p["n_max"] + 1),
                            GridSpec(p["grid_lo"], p["grid_hi"], p["grid_step"]), p["r"])
    hit = rep.first_below(p["d0_tol"])
    passed = rep.d0_strictly_decreasing and hit is not None and hit.d1 < p["d1_tol"]
    rows = [["n", "d0", "d1", "d2"]] + [[r.n, r.d0, r.d1, r.d2] for r in rep.rows]
    data = {"rows": [{"n": r.n, "d0": r.d0, "d1": r.d1, "d2": r.d2, "escaped": r.escaped} for r in rep.rows],
            "d0_strictly_decreasing": rep.d0_strictly_decreasing,
            "first_below": None if hit is None else hit.n, "passed": passed}
    return ExperimentResult("renorm", data, {"convergence": rows}, passed)


def _run_census(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    if p["map"] == "poly1d":
        f = Poly1DMap(p["coeffs"])
        deg = len(f.coeffs) - 1
    elif p["map"] == "limit":
        f = LimitMap(p["k"], p["coeffs"])
        deg = p["k"]
    else:
        raise SchemaError(f"bad value for 'map': {p['map']!r} (poly1d or limit)")
    cen = count_Pn(f, p["n_max"], budget=p["budget"])
    counts = [cen.table[n] for n in range(1, p["n_max"] + 1)]
    hyper = all(r.margin > p["margin_tol"] for recs in cen.orbits.values() for r in recs)
    capped = all(c <= deg ** n for n, c in enumerate(counts, start=1))
    z = zeta_partial(cen, p["n_max"])
    nz = [c for c in counts if c]
    gr = growth_rate(cen).value if nz else None
    rows = [["n", "P_n", "min_margin"]]
    for n in range(1, p["n_max"] + 1):
        recs = cen.orbits[n]
        rows.append([n, cen.table[n], min((r.margin for r in recs), default=math.inf)])
    data = {"counts": counts, "zeta": [str(c) for c in z.coeffs], "growth_rate": gr,
            "all_hyperbolic": hyper, "bezout_capped": capped,
            "orbits": {str(n): [r.to_dict() for r in cen.orbits[n]] for n in cen.orbits},
            "passed": hyper and capped}
    return ExperimentResult("census", data, {"census": rows}, hyper and capped)


def _run_tower(cfg: ExperimentConfig) -> ExperimentResult:
    from .tower import gap_ratio, select_tower_indices, tower_model

    p = cfg.params
    model = tower_model(lam=p["lambda"], mu=p["mu"], c=p["c"])
    spec = select_tower_indices(model, p["k"], p["n1"])
    rep = gap_ratio(spec, p["r"])
    data = {"indices": list(spec.indices), "t": list(spec.t), "s": list(spec.s),
            "gaps": list(spec.gaps), "ratios": list(rep.ratios), "bound": list(rep.bounds),
            "gap_limits": list(rep.gap_limits), "flagged": rep.flagged,
            "passed": rep.within_bounds}
    rows = [["floor", "n_i", "n_next", "t", "s", "gap", "ratio", "bound"]]
    for i, (ti, si) in enumerate(zip(spec.t, spec.s)):
        rows.append([i + 1, spec.indices[i], spec.indices[i + 1], ti, si, spec.gaps[i],
                     rep.ratios[i], rep.bounds[i]])
    return ExperimentResult("tower", data, {"tower": rows}, rep.within_bounds)


def _run_tangency(cfg: ExperimentConfig) -> ExperimentResult:
    from .tangency import tangency_model, tangency_order_solver

    p = cfg.params
    model = tangency_model(p["k"], lam=p["lambda"], mu=p["mu"], g3=p["g3"])
    st = tangency_order_solver(model, p["k"], p["n"], max_newton=p["max_newton"], tol=p["tol"])
    rows = [["quantity", "value"], ["k", st.k], ["n", st.n], ["epsilon", st.epsilon],
            ["t_star", st.t_star], ["S", st.S], ["sigma_sign", st.sigma_sign]]
    rows += [[f"mu{i}", v] for i, v in enumerate(st.mu_vec)]
    rows += [[f"residual{i}", v] for i, v in enumerate(st.scaled_residuals)]
    rows += [["norm", st.norm], ["iterations", st.iterations]]
    rows += [[key, val] for key, val in sorted(st.certificates.items())]
    trace = [["iteration", "norm"]] + [[i, v] for i, v in enumerate(st.trace)]
    data = st.to_dict()
    data["passed"] = st.norm < p["tol"]
    return ExperimentResult("tangency", data, {"state": rows, "trace": trace}, data["passed"])


def _run_polymap(cfg: ExperimentConfig) -> ExperimentResult:
    from .polymap import NONHYPERBOLIC_WITNESS, monte_carlo_hyperbolicity

    p = cfg.params
    st = monte_carlo_hyperbolicity(p["N"], p["D"], p["k_max"], p["samples"], cfg.seed,
                                   p["margin_tol"], NONHYPERBOLIC_WITNESS if p["witness"] else None)
    expected = 1 if p["witness"] else 0
    data = st.to_dict()
    data["expected_flagged"] = expected
    data["passed"] = st.n_flagged == expected and (not p["witness"] or st.witness_index in st.flagged)
    rows = [["sample", "margin", "flagged"]]
    fl = set(st.flagged)
    rows += [[i, m, int(i in fl)] for i, m in enumerate(st.margins)]
    return ExperimentResult("polymap", data, {"margins": rows}, data["passed"])


def _run_cascade(cfg: ExperimentConfig) -> ExperimentResult:
    p = cfg.params
    spec = CascadeSpec(preset=p["preset"], values=p["values"], periods=p["periods"], k=p["k"],
                       epsilon=p["epsilon"], lam=p["lambda"], mu=p["mu"], seed=cfg.seed,
                       margin_tol=p["margin_tol"], probe_fraction=p["probe_fraction"])
    rep = run_cascade(spec)
    rows = [["period", "a_n", "requested", "achieved", "ratio", "min_margin", "probe_count", "passed"]]
    for s in rep.stages:
        rows.append([s.period, s.a_n, s.requested, s.achieved, s.ratio, s.min_margin,
                     s.probe.get("count", ""), s.passed])
    return ExperimentResult("cascade", rep.to_dict(), {"stages": rows}, rep.passed)


RUNNERS = {"renorm": _run_renorm, "census": _run_census, "tower": _run_tower,
           "tangency": _run_tangency, "polymap": _run_polymap, "cascade": _run_cascade}


def versions() -> dict:
    import flint
    import mpmath
    import scipy
    import sympy

    return {"tangency_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__, "mpmath": mpmath.__version__,
            "flint": flint.__version__}


def run_experiment(cfg: ExperimentConfig) -> tuple[ExperimentResult, dict, dict[str, str]]:
    """Run, render outputs and (if cfg.out is set) write them with a manifest.

    Returns (result, manifest, files).  Module errors are re-raised with the
    experiment name attached.
    """
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        res = RUNNERS[cfg.experiment](cfg)
    except LabError as exc:
        exc.args = (f"[{cfg.experiment}] {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
        raise
    elapsed = time.perf_counter() - t0
    files = res.render(cfg.fmt)
    manifest = {"experiment": cfg.experiment, "config": cfg.echo(), "seed": cfg.seed,
                "tolerances": cfg.tolerances, "started": started, "elapsed": elapsed,
                "versions": versions(), "passed": res.passed}
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
    return res, manifest, files
