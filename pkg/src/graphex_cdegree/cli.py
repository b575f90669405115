"""Command-line interface.

Exit codes: 0 success, 2 bad configuration or arguments, 3 numeric
failure, 4 capacity guard.  Diagnostics go to stderr; data goes to files
or stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import numerics
from .cdegree import count_common, empirical_distribution, fit_tail_index
from .errors import ConfigError, GraphexError
from .experiment import ExperimentConfig, compare_mu1_matched, run_experiment
from .graphex import GraphexSpec, MarginalEvaluator, eval_lambda, limit_functions, scaling_b
from .simulator import _atomic_write, export_graph, load_graph, planted_eta_max, planted_pair_draws, simulate
from .theory import bound_interval


def _spec_from_args(args) -> GraphexSpec:
    if args.family == "zero":
        return GraphexSpec.custom_symmetric(lambda x, y: np.zeros(np.broadcast(x, y).shape), args.alpha,
                                            separable=False, monotone=True, name="zero")
    return GraphexSpec.from_config({"family": args.family, "alpha": args.alpha})


def _add_spec(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", required=True,
                   choices=["sum_power_shifted", "sum_power_stable", "separable_shifted", "zero"],
                   help="graphex family ('zero' is the empty graphex W = 0)")
    p.add_argument("--alpha", type=float, required=True)


def _floats(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from e


def cmd_theory_marginals(args) -> int:
    spec = _spec_from_args(args)
    ev = MarginalEvaluator(spec)
    at = args.at
    out: dict = {"spec": spec.to_config() if spec.is_builtin else spec.label}
    out["mu1"] = ev.mu1(at[0])
    if len(at) >= 2:
        out["mu2"] = ev.mu2(at[0], at[1])
        if min(at[:2]) > 0:
            out["lambda"] = eval_lambda(limit_functions(spec, ev), at[0], at[1])
    if args.t is not None:
        out["t"] = args.t
        out["b_t"] = scaling_b(spec, args.t, ev)
    print(json.dumps(out, indent=2))
    return 0


def cmd_theory_bounds(args) -> int:
    print(bound_interval(args.alpha, args.separable))
    return 0


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    g = simulate(spec, args.t, args.seed, eta_max=args.eta_max, missed_edge_budget=args.budget,
                 max_points=args.max_points)
    export_graph(g, args.out, spec)
    print(f"{g.n_vertices} vertices, {g.edge_count} edges -> {args.out}", file=sys.stderr)
    return 0


def cmd_cdegree(args) -> int:
    g = load_graph(args.graph)
    restriction = None
    if args.epsilon is not None:
        meta = json.loads((Path(args.graph) / "meta.json").read_text())
        if not isinstance(meta.get("spec"), dict):
            raise ConfigError("--epsilon needs a graph exported with a built-in spec")
        spec = GraphexSpec.from_config(meta["spec"])
        restriction = (args.epsilon, scaling_b(spec, g.points.t))
    hist = count_common(g, restriction)
    out = Path(args.out or args.graph)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "histogram.csv", hist.to_csv())
    dist = empirical_distribution(hist) if hist.pairs_positive else []
    _atomic_write(out / "distribution.csv", "k,prob\n" + "".join(f"{k},{p!r}\n" for k, p in dist))
    print(f"{hist.pairs_positive} pairs with a common neighbour -> {out}", file=sys.stderr)
    return 0


def _read_distribution(path) -> list[tuple[float, float]]:
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read distribution {path}: {e}") from e
    if arr.size == 0:
        raise ConfigError(f"{path} holds no rows")
    return [(float(k), float(p)) for k, p in arr[:, :2]]


def cmd_fit(args) -> int:
    fit = fit_tail_index(_read_distribution(args.dist), args.r2, args.min_points, args.log_bins)
    text = json.dumps(fit.to_dict(), indent=2)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        print(text)
    return 0


def cmd_verify_poisson(args) -> int:
    spec = _spec_from_args(args)
    ev = MarginalEvaluator(spec)
    eta_max = args.eta_max
    if eta_max is None:
        # an empty graphex needs no truncation at all; any positive value will do
        eta_max = max(planted_eta_max(spec, args.t, args.x, args.y), 1.0 / args.t)
    draws = planted_pair_draws(spec, args.t, eta_max, args.x, args.y, args.draws, args.seed)
    rate = args.t * ev.mu2(args.x, args.y)
    mean = float(draws.mean())
    se = math.sqrt(rate / draws.size) if rate > 0 else 0.0
    stat, p, dof = numerics.chi_square_gof(draws, lambda k: stats.poisson.pmf(k, rate))
    degenerate = dof == 0
    report = {
        "rate": rate,
        "draws": int(draws.size),
        "mean": mean,
        "z_mean": (mean - rate) / se if se > 0 else 0.0,
        "dispersion": numerics.dispersion_index(draws) if mean > 0 else None,
        "chi2": stat,
        "dof": dof,
        "p_value": p,
        "degenerate": degenerate,
        "eta_max": eta_max,
        "pass": bool(p > 0.01) if not degenerate else bool(np.all(draws == 0) and rate == 0),
    }
    print(json.dumps(report, indent=2))
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    kw = {}
    if args.out:
        kw["outputs"] = args.out
    if args.workers:
        kw["workers"] = args.workers
    if args.keep_dists:
        kw["keep_dists"] = True
    if kw:
        cfg = dataclasses.replace(cfg, **kw)
    if not cfg.outputs:
        raise ConfigError("no output directory: set 'outputs' in the config or pass --out")
    report = run_experiment(cfg)
    print(report.summary())
    return 0


def cmd_compare(args) -> int:
    sep = ExperimentConfig.from_json(args.separable)
    non = ExperimentConfig.from_json(args.non_separable)
    cmp = compare_mu1_matched(sep, non)
    text = json.dumps(cmp.to_dict(), indent=2)
    if args.out:
        _atomic_write(Path(args.out), text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphex-cdegree", description="Common-connection statistics of graphex graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theory", help="closed-form and limit quantities").add_subparsers(dest="what", required=True)
    m = th.add_parser("marginals", help="mu_1, mu_2, lambda and b(t) at a point")
    _add_spec(m)
    m.add_argument("--at", type=_floats, required=True, help="x or x,y")
    m.add_argument("--t", type=float)
    m.set_defaults(func=cmd_theory_marginals)
    b = th.add_parser("bounds", help="tail-index bound interval")
    b.add_argument("--alpha", type=float, required=True)
    b.add_argument("--separable", action="store_true")
    b.set_defaults(func=cmd_theory_bounds)

    s = sub.add_parser("simulate", help="sample a graph and export it")
    _add_spec(s)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--eta-max", type=float)
    s.add_argument("--budget", type=float, default=0.1, help="expected missed edges")
    s.add_argument("--max-points", type=int, default=5 * 10**6)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("cdegree", help="common-neighbour histogram of an exported graph")
    c.add_argument("--graph", required=True)
    c.add_argument("--epsilon", type=float)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cdegree)

    f = sub.add_parser("fit", help="tail-index fit of a k,prob file")
    f.add_argument("--dist", required=True)
    f.add_argument("--r2", type=float, default=0.995)
    f.add_argument("--min-points", type=int, default=5)
    f.add_argument("--log-bins", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("verify", help="distribution checks").add_subparsers(dest="what", required=True)
    vp = v.add_parser("poisson", help="planted-pair common-neighbour count against its Poisson law")
    _add_spec(vp)
    vp.add_argument("--t", type=float, required=True)
    vp.add_argument("--x", type=float, required=True)
    vp.add_argument("--y", type=float, required=True)
    vp.add_argument("--draws", type=int, default=10**5)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--eta-max", type=float)
    vp.set_defaults(func=cmd_verify_poisson)

    e = sub.add_parser("experiment", help="replicated simulate/count/fit study")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.add_argument("--workers", type=int)
    e.add_argument("--keep-dists", action="store_true")
    e.set_defaults(func=cmd_experiment)

    cm = sub.add_parser("compare", help="separable vs non-separable runs with matched mu_1 index")
    cm.add_argument("--separable", required=True)
    cm.add_argument("--non-separable", required=True)
    cm.add_argument("--out")
    cm.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return args.func(args)
    except GraphexError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MemoryError as e:
        print(f"error: out of memory: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
