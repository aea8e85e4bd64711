"""Command line: ``tangency-lab [global flags] <experiment> [options]``.

Exit codes: 0 when the experiment's acceptance check passes, 2 when it
runs but fails the check, 1 on any error.
"""
from __future__ import annotations

import argparse
import sys

from . import kvfile
from .errors import LabError
from .harness import ExperimentConfig, run_experiment

# subcommand -> [(flag, config key, help)]
OPTIONS = {
    "renorm": [("--model", "model", "desk or exact"), ("--k", "k", "tangency order"),
               ("--M", "M", "limit coefficients, comma separated"),
               ("--lambda", "lambda", "contracting eigenvalue"), ("--mu", "mu", "expanding eigenvalue"),
               ("--sigma", "sigma", "global-map coefficient sigma"),
               ("--n-min", "n_min", "first n"), ("--n-max", "n_max", "last n"),
               ("--grid-step", "grid_step", "grid spacing"), ("--r", "r", "derivative order 0..2")],
    "census": [("--map", "map", "poly1d or limit"), ("--coeffs", "coeffs", "ascending coefficients"),
               ("--k", "k", "order of the limit map"), ("--n-max", "n_max", "largest period")],
    "tower": [("--k", "k", "number of floors"), ("--n1", "n1", "first index"),
              ("--lambda", "lambda", "contracting eigenvalue"), ("--mu", "mu", "expanding eigenvalue"),
              ("--c", "c", "tongue curvature"), ("--r", "r", "smoothness exponent")],
    "tangency": [("--k", "k", "tangency order"), ("--n", "n", "number of saddle passes"),
                 ("--max-newton", "max_newton", "Newton iteration cap")],
    "polymap": [("--N", "N", "dimension"), ("--D", "D", "degree"), ("--k-max", "k_max", "largest period"),
                ("--samples", "samples", "number of random samples"),
                ("--margin-tol", "margin_tol", "flag threshold for the unit-circle margin"),
                ("--witness", "witness", "append z^2 - 3/4 as an extra sample (true/false)")],
    "cascade": [("--preset", "preset", "a_n preset: n^n, 2^n, zero or list"),
                ("--values", "values", "a_1, a_2, ... for the list preset"),
                ("--periods", "periods", "stage periods"), ("--k", "k", "degeneracy order"),
                ("--epsilon", "epsilon", "splitting size")],
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for failed acceptance checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=d, help="unsigned 64-bit seed")
    p.add_argument("--out", metavar="DIR", default=d, help="write outputs and manifest.json here")
    p.add_argument("--format", choices=("csv", "json"), default=d, help="main output format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tangency-lab", description=__doc__.splitlines()[0])
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name)
        _globals(sp, suppress=True)
        for flag, key, hlp in opts:
            if flag == "--seed":
                continue
            sp.add_argument(flag, dest=f"opt_{key}", default=None, help=hlp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = kvfile.load(args.config) if args.config else {}
        for flag, key, _ in OPTIONS[args.experiment]:
            v = getattr(args, f"opt_{key}", None)
            if v is not None:
                raw[key] = v
        cfg = ExperimentConfig.from_mapping(args.experiment, raw, seed=args.seed, out=args.out,
                                            fmt=args.format)
        res, manifest, files = run_experiment(cfg)
    except (LabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not cfg.out:
        main_file = "result.json" if cfg.fmt == "json" else "result.csv"
        sys.stdout.write(files[main_file])
    status = "PASS" if res.passed else "FAIL"
    print(f"{cfg.experiment}: {status}", file=sys.stderr)
    return 0 if res.passed else 2


if __name__ == "__main__":
    sys.exit(main())
