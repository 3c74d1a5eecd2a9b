"""Command line interface.

    convexheat eval --domain ball --bound upper-main --t 1 --x 0,0 --y 0,0
    convexheat mc --domain '{"kind": "interval", "params": {"a": 0, "b": 1}}' --t 0.1 --x 0.3 --y 0.7 --seed 1
    convexheat characteristic --domain stadium --budget 100000 --seed 0
    convexheat experiment ball-sharpness --seed 0 --json out.json --csv out.csv
    convexheat verify --suite ck

Exit codes: 0 success, 1 failed check or experiment, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds, characteristics, oracle
from .experiments import PRESETS, ExperimentError, ExperimentSpec, _json, _plain, emit_report, run_experiment, run_verify
from .geometry import GeometryError, make_domain

BOUND_KINDS = {
    "upper-main": lambda D, t, x, y, T: bounds.upper_bound_main(D, t, x, y, T=T),
    "upper-midpoint": lambda D, t, x, y, T: bounds.upper_bound_midpoint(D, t, x, y, T=T),
    "lower-basic": lambda D, t, x, y, T: bounds.lower_bound_basic(D, t, x, y),
    "lower-improved-i": lambda D, t, x, y, T: bounds.lower_bound_improved(D, t, x, y)[0],
    "lower-improved-ii": lambda D, t, x, y, T: bounds.lower_bound_improved(D, t, x, y)[1],
    "two-sided-sq": lambda D, t, x, y, T: bounds.two_sided_factor(D, t, x, y, "SQ"),
    "two-sided-sr": lambda D, t, x, y, T: bounds.two_sided_factor(D, t, x, y, "SR"),
    "wedge-obtuse": lambda D, t, x, y, T: bounds.wedge_obtuse_upper(D.H1, D.H2, t, x, y),
}


class UsageError(Exception):
    pass


def _point(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _domain(text, dim):
    """A kind name such as ``ball`` or a JSON ``{"kind": ..., "params": ...}`` document."""
    text = text.strip()
    if text.startswith("{"):
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad domain JSON: {exc}")
    else:
        spec = text
    try:
        return make_domain(spec, dim=dim)
    except (GeometryError, ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"bad domain: {exc}")


def _print(obj):
    sys.stdout.write(_json(_plain(obj)) + "\n")


def _parser():
    p = argparse.ArgumentParser(prog="convexheat", description="Dirichlet heat kernel bounds and oracles on convex domains")
    sub = p.add_subparsers(dest="command", required=True)

    def pair(sp):
        sp.add_argument("--domain", required=True, help="kind name (dim taken from --x) or JSON domain spec")
        sp.add_argument("--t", type=float, required=True)
        sp.add_argument("--x", type=_point, required=True)
        sp.add_argument("--y", type=_point, required=True)

    e = sub.add_parser("eval", help="evaluate a bound with its factor breakdown")
    pair(e)
    e.add_argument("--bound", required=True, choices=sorted(BOUND_KINDS))
    e.add_argument("--T", type=float, default=1.0, help="time horizon for the upper bounds")

    m = sub.add_parser("mc", help="Monte Carlo kernel estimate")
    pair(m)
    m.add_argument("--paths", type=int, default=100_000)
    m.add_argument("--steps", type=int, default=256)
    m.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("characteristic", help="estimate the midpoint characteristics")
    c.add_argument("--domain", required=True)
    c.add_argument("--dim", type=int, default=2)
    c.add_argument("--target", choices=["Q", "R"], default="Q")
    c.add_argument("--budget", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)

    x = sub.add_parser("experiment", help="run a preset or a JSON experiment spec")
    x.add_argument("spec", help=f"preset ({', '.join(sorted(PRESETS))}) or path to a JSON spec")
    x.add_argument("--seed", type=int, default=None, help="master seed (overrides the seed in the spec file)")
    x.add_argument("--json", dest="json_out")
    x.add_argument("--csv", dest="csv_out")
    x.add_argument("--plotdata", dest="plot_out")

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("--suite", default="all", choices=["all", "kernels", "geometry", "bounds", "ck"])
    v.add_argument("--seed", type=int, default=0)
    return p


def _cmd_eval(a):
    D = _domain(a.domain, a.x.size)
    try:
        br = BOUND_KINDS[a.bound](D, a.t, a.x, a.y, a.T)
    except (GeometryError, ValueError, AttributeError) as exc:
        raise UsageError(str(exc))
    _print(br.to_dict())
    return 0


def _cmd_mc(a):
    D = _domain(a.domain, a.x.size)
    try:
        est = oracle.mc_kernel(D, a.t, a.x, a.y, steps=a.steps, paths=a.paths, seed=a.seed)
    except (GeometryError, ValueError) as exc:
        raise UsageError(str(exc))
    _print(est.to_dict())
    return 0


def _cmd_characteristic(a):
    D = _domain(a.domain, a.dim)
    fn = characteristics.qd_estimate if a.target == "Q" else characteristics.rd_estimate
    try:
        rep = fn(D, budget=a.budget, seed=a.seed)
    except (GeometryError, ValueError) as exc:
        raise UsageError(str(exc))
    _print(rep.to_dict())
    return 0


def _cmd_experiment(a):
    if a.spec in PRESETS:
        spec = ExperimentSpec(name=a.spec, preset=a.spec)
    else:
        try:
            with open(a.spec) as fh:
                spec = ExperimentSpec.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read experiment spec {a.spec!r}: {exc}")
    if a.seed is not None:
        spec.budget = {**spec.budget, "seed": a.seed}
    outputs = {k: v for k, v in (("json", a.json_out), ("csv", a.csv_out), ("plotdata", a.plot_out)) if v}
    spec.outputs = {**spec.outputs, **outputs}
    try:
        report = run_experiment(spec)
    except ExperimentError as exc:
        for fmt, path in spec.outputs.items():
            emit_report(exc.report, fmt, path)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GeometryError, ValueError) as exc:
        raise UsageError(str(exc))
    _print({"name": report.name, "summary": report.summary})
    return 0


def _cmd_verify(a):
    results = run_verify(a.suite, a.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return 0 if all(ok for _, ok, _ in results) else 1


COMMANDS = {
    "eval": _cmd_eval,
    "mc": _cmd_mc,
    "characteristic": _cmd_characteristic,
    "experiment": _cmd_experiment,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
