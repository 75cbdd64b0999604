"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 solver failure (no root / ambiguous root).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .capacity import CapacityGameConfig, check_nash, deterministic_equilibrium_set, solve_capacity_equilibria
from .errors import InputError, SolverError
from .experiments import SCENARIOS, ScenarioConfig, run_scenario
from .imbalance import Deterministic, HalfNormal, IIDNormal, parse_model
from .pricing import solve_market, verify_best_response
from .throughput import estimate_moments_mc, units_from_caps
from .util import parse_list, parse_number, parse_range

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, "%s: error: %s\n" % (self.prog, message))


def _clean(obj):
    """Recursively turn numpy scalars into plain Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


def _market_flags(p):
    p.add_argument("--caps", default="1.5,1", help="firm energy capacities S1,S2 [energy] (default 1.5,1)")
    p.add_argument("--alphas", default="1,1", help="leakage retention per firm, in [0,1] [-] (default 1,1)")
    p.add_argument("--s0-frac", default="0", help="initial charge as a fraction of capacity [-] (default 0)")
    p.add_argument("--sigma", default=None, help="variance of i.i.d. normal imbalance [energy^2]; implies --demand normal")
    p.add_argument("--demand", default=None,
                   help="imbalance model: halfnormal | det:<v>[,<v>...] | normal:<var> | file:<path> (default halfnormal)")
    p.add_argument("--horizon", type=int, default=0, help="market horizon T; periods t=0..T [periods] (default 0)")
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo sample paths [count] (default 100000)")
    p.add_argument("--seed", type=int, default=0, help="master random seed [integer] (default 0)")
    p.add_argument("--reservation", default="1", help="backstop price R [money/energy] (default 1)")


def build_parser():
    parser = _Parser(prog="baleq", description="Price and capacity equilibria for two storage firms.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("throughput", help="priority-ordered expected throughputs")
    _market_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json", help="output format")

    p = sub.add_parser("pricing", help="mixed-strategy price equilibrium as JSON")
    _market_flags(p)
    p.add_argument("--format", choices=("json",), default="json", help="output format")

    p = sub.add_parser("capacity", help="capacity equilibria as JSON")
    p.add_argument("--gamma", default="0.5,0.5", help="opportunity cost per firm, in (0, R] [money/energy]")
    p.add_argument("--reservation", default="1", help="backstop price R [money/energy] (default 1)")
    p.add_argument("--demand", default="halfnormal", help="halfnormal | det:<v> (default halfnormal)")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; capacity solves are deterministic")
    p.add_argument("--samples", type=int, default=0, help="accepted for symmetry; closed forms are used")
    p.add_argument("--format", choices=("json",), default="json", help="output format")

    for name in SCENARIOS:
        p = sub.add_parser(name, help="run the %s scenario and write CSV + plot script" % name)
        p.add_argument("--config", default=None, help="JSON run-config file (ScenarioConfig fields)")
        p.add_argument("--out", default=None, help="output directory (default runs)")
        p.add_argument("--samples", type=int, default=None, help="Monte Carlo sample paths [count] (default 10000)")
        p.add_argument("--seed", type=int, default=None, help="master random seed [integer] (default 0)")
        p.add_argument("--caps", default=None, help="firm energy capacities S1,S2 [energy]")
        p.add_argument("--horizons", default=None, help="horizon grid, list or start:stop:step [periods]")
        p.add_argument("--sigmas", default=None, help="imbalance variance grid [energy^2]")
        p.add_argument("--s0-fracs", default=None, help="initial-charge fraction grid [-]")
        p.add_argument("--alpha-grid", default=None, help="leakage retention grid [-]")
        p.add_argument("--gamma-grid", default=None, help="gamma_1 grid, list or start:stop:step [money/energy]")
        p.add_argument("--gamma2", default=None, help="gamma_2 [money/energy] (default 0.5)")
        p.add_argument("--reservation", default=None, help="backstop price R [money/energy] (default 1)")
        p.add_argument("--format", choices=("csv",), default="csv", help="output format")

    p = sub.add_parser("verify", help="run best-response and invariant checks, print pass/fail")
    p.add_argument("--samples", type=int, default=20_000, help="Monte Carlo sample paths [count] (default 20000)")
    p.add_argument("--seed", type=int, default=0, help="master random seed [integer] (default 0)")
    p.add_argument("--grid-step", default="0.01", help="price grid step [money/energy] (default 0.01)")
    return parser


def _model(args):
    if args.demand:
        return parse_model(args.demand)
    if args.sigma is not None:
        return IIDNormal(parse_number(args.sigma))
    return HalfNormal()


def _units(args):
    caps = parse_list(args.caps)
    alphas = parse_list(args.alphas)
    if len(caps) != 2 or len(alphas) != 2:
        raise InputError("--caps and --alphas need exactly two values")
    return units_from_caps(caps, alphas, parse_number(args.s0_frac))


def cmd_throughput(args, out):
    units = _units(args)
    model = _model(args)
    m = estimate_moments_mc(units, model, args.horizon, args.samples, args.seed)
    if args.format == "csv":
        out.write("# seed: %d\n# count: %d\nfirm,x_low,x_high,se_low,se_high\n" % (args.seed, args.samples))
        for i in range(2):
            out.write("%d,%r,%r,%r,%r\n" % (i + 1, m.x_low[i], m.x_high[i], m.se_low[i], m.se_high[i]))
        return EXIT_OK
    doc = m.as_dict()
    doc.update(seed=args.seed, samples=args.samples, demand=model.label, horizon=args.horizon)
    out.write(dumps(doc) + "\n")
    return EXIT_OK


def cmd_pricing(args, out):
    units = _units(args)
    model = _model(args)
    eq = solve_market(units, model, args.horizon, args.samples, args.seed, parse_number(args.reservation))
    doc = eq.as_dict()
    doc.update(seed=args.seed, samples=args.samples, demand=model.label, horizon=args.horizon)
    out.write(dumps(doc) + "\n")
    return EXIT_OK


def cmd_capacity(args, out):
    gamma = parse_list(args.gamma)
    R = parse_number(args.reservation)
    model = parse_model(args.demand)
    config = CapacityGameConfig(tuple(gamma), R, model)
    if isinstance(model, Deterministic):
        seg = deterministic_equilibrium_set(model.values[0], config)
        points = []
        for t in (0.0, 0.5, 1.0):
            caps = seg.point(t)
            v = check_nash(caps, config)
            points.append({"capacities": list(caps), "net_payoffs": list(seg.net_payoffs(caps, config)),
                           "is_equilibrium": v.is_equilibrium, "worst_deviation_gain": v.worst_deviation_gain})
        doc = {"demand": model.label, "lower_bounds": list(seg.lower_bounds), "s1_min": seg.s1_min,
               "s1_max": seg.s1_max, "note": seg.note, "points": points}
    else:
        doc = solve_capacity_equilibria(config).as_dict()
        doc["demand"] = model.label
    doc.update(gamma=gamma, reservation=R, seed=args.seed, samples=args.samples)
    out.write(dumps(doc) + "\n")
    return EXIT_OK


def cmd_scenario(args, out):
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.samples is not None:
        overrides["count"] = args.samples
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.caps is not None:
        overrides["caps"] = parse_list(args.caps)
    if args.horizons is not None:
        overrides["horizons"] = [int(round(t)) for t in parse_range(args.horizons)]
    if args.sigmas is not None:
        overrides["variances"] = parse_range(args.sigmas)
    if args.s0_fracs is not None:
        overrides["s0_fracs"] = parse_range(args.s0_fracs)
    if args.alpha_grid is not None:
        overrides["alphas"] = parse_range(args.alpha_grid)
    if args.gamma_grid is not None:
        overrides["gamma1_grid"] = parse_range(args.gamma_grid)
    if args.gamma2 is not None:
        overrides["gamma2"] = parse_number(args.gamma2)
    if args.reservation is not None:
        overrides["reservation"] = parse_number(args.reservation)
    if args.config:
        cfg = ScenarioConfig.from_file(args.config)
        if cfg.scenario != args.command:
            raise InputError("config file is for %s, not %s" % (cfg.scenario, args.command))
        data = cfg.to_dict()
        data.update(overrides)
        cfg = ScenarioConfig(**data)
    else:
        cfg = ScenarioConfig.default(args.command, **overrides)
    table = run_scenario(cfg)
    out.write("wrote %s/%s.csv (%d rows)\n" % (cfg.out_dir, cfg.scenario, len(table.rows)))
    return EXIT_OK


def cmd_verify(args, out):
    step = parse_number(args.grid_step)
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    checks = []

    units = units_from_caps((1.5, 1.0))
    det = Deterministic((2.0,))
    eq = solve_market(units, det)
    rep = verify_best_response(eq, units, det, 0, grid, args.samples, args.seed)
    checks.append(("best response, deterministic B=2", rep.passed()))

    eq = solve_market(units, HalfNormal(), 0, 100_000, args.seed)
    rep = verify_best_response(eq, units, HalfNormal(), 0, grid, args.samples, args.seed + 1)
    checks.append(("best response, half-normal single period", rep.passed()))

    units_dyn = units_from_caps((1.5, 1.0), charge_fraction=0.5)
    eq = solve_market(units_dyn, IIDNormal(0.25), 5, 100_000, args.seed)
    rep = verify_best_response(eq, units_dyn, IIDNormal(0.25), 5, grid, max(args.samples, 100_000), args.seed + 1)
    checks.append(("best response, T=5 normal variance 1/4", rep.passed()))

    eq = solve_market(units_from_caps((1.5, 1.0)), Deterministic((3.0,)))
    checks.append(("degenerate B >= S1+S2 prices at R", eq.pure_price == eq.reservation))
    eq = solve_market(units_from_caps((1.5, 1.0)), Deterministic((0.5,)))
    checks.append(("degenerate B <= S2 prices at 0", eq.pure_price == 0.0))

    outcome = solve_capacity_equilibria(CapacityGameConfig((0.5, 0.5)))
    checks.append(("symmetric capacity game has two equilibria", len(outcome.equilibria) == 2))

    failed = 0
    for name, ok in checks:
        out.write("%s  %s\n" % ("PASS" if ok else "FAIL", name))
        failed += not ok
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


COMMANDS = {"throughput": cmd_throughput, "pricing": cmd_pricing, "capacity": cmd_capacity, "verify": cmd_verify}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = COMMANDS.get(args.command, cmd_scenario)
    try:
        return handler(args, out)
    except InputError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_INPUT
    except SolverError as exc:
        sys.stderr.write("solver error: %s\n" % exc)
        return EXIT_SOLVER


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
