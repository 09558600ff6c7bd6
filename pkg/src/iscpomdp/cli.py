"""Command-line entry point: ``iscpomdp build-grid | solve | simulate | report``.

Exit codes: 0 success, 1 usage error, 2 model/policy validation failure,
3 solver budget failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from iscpomdp.augmentation import augment
from iscpomdp.costs import BeliefCost, InitialStateCost, load_cost, save_cost
from iscpomdp.errors import BudgetTooSmall, IscPomdpError
from iscpomdp.gridworld import (
    GridExperiment,
    build_baseline_cost,
    build_experiment,
    build_grid_model,
    build_isc_cost,
    default_spec,
    load_grid_config,
)
from iscpomdp.harness import RunConfig, monte_carlo, read_runs, report, write_runs, write_trajectories
from iscpomdp.model import TabularModel, load_model, save_model, validate_model
from iscpomdp.solver import AlphaPolicy, SolveParams, solve_point_based

log = logging.getLogger("iscpomdp")

EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Invalid(Exception):
    pass


def _grid_spec(name):
    if name in (None, "fig1-approx"):
        return default_spec()
    return load_grid_config(name)


def _load_model_checked(path) -> TabularModel:
    model = load_model(path)
    rep = validate_model(model)
    if not rep.ok:
        raise _Invalid(f"{path}: invalid model\n{rep}")
    return model


def goal_map_from_cost(c: InitialStateCost) -> dict:
    """Goal of each initial state: the first current state with zero cost under every control."""
    free = np.all(c.table == 0.0, axis=2)
    return {x0: int(np.argmax(free[x0])) if free[x0].any() else -1 for x0 in range(len(free))}


def cmd_build_grid(args):
    spec = _grid_spec(args.config)
    save_model(build_grid_model(spec), args.out)
    if args.isc_cost_out:
        save_cost(args.isc_cost_out, build_isc_cost(spec))
    if args.kappa_out:
        save_cost(args.kappa_out, build_baseline_cost(spec))
    log.info("wrote %s (%d states, layout %s)", args.out, spec.n_states, spec.layout)


def cmd_solve(args):
    model = _load_model_checked(args.model)
    if args.discount is not None:
        model = replace(model, discount=args.discount)
    cost_path = args.isc_cost or args.kappa
    cost, psi = load_cost(cost_path)
    if args.psi:
        psi = BeliefCost.parse(args.psi)
    if args.isc_cost:
        if not isinstance(cost, InitialStateCost):
            raise _Invalid(f"{cost_path}: --isc-cost expects a 'c' table")
        target = augment(model)
    else:
        if isinstance(cost, InitialStateCost):
            raise _Invalid(f"{cost_path}: --kappa expects a 'kappa' table")
        target = model
    params = SolveParams(
        time_budget=args.time_budget,
        max_belief_points=args.max_points,
        epsilon=args.epsilon,
        rng_seed=args.seed,
        horizon_bound=args.horizon_bound,
    )
    policy = solve_point_based(target, cost, psi, params)
    policy.save(args.out)
    s = policy.stats
    log.info("%d alphas, %d points, %d sweeps, converged=%s, %.1fs",
             len(policy), s.n_points, s.sweeps, s.converged, s.elapsed)
    if s.budget_exhausted:
        log.warning("time budget exhausted before convergence; result depends on timing")


def _experiment(args, model) -> GridExperiment:
    if args.grid:
        exp = build_experiment(_grid_spec(args.grid))
        if exp.model.fingerprint() != model.fingerprint():
            raise _Invalid("--grid does not describe the model given by --model")
        return exp
    if not args.isc_cost:
        raise _Invalid("simulate needs --isc-cost or --grid to score runs")
    c, _ = load_cost(args.isc_cost)
    if not isinstance(c, InitialStateCost):
        raise _Invalid(f"{args.isc_cost}: expected a 'c' table")
    return GridExperiment(model, c, None, goal_map_from_cost(c))


def cmd_simulate(args):
    model = _load_model_checked(args.model)
    exp = _experiment(args, model)
    policy = AlphaPolicy.load(args.policy)
    cfg = RunConfig(exp, policy, args.arm, args.horizon, args.runs, args.seed, args.workers)
    summary, records = monte_carlo(cfg, return_records=True)
    write_runs(summary, args.out)
    if args.trajectories:
        write_trajectories(records, args.trajectories)
    log.info("%s arm: cost %.3f (se %.3f), goals %d/%d", args.arm, summary.avg_discounted_cost,
             summary.se_discounted_cost, summary.goals_reached, summary.num_runs)


def cmd_report(args):
    table, _ = report(read_runs(args.isc), read_runs(args.base), args.out)
    for row in table:
        print(f"{row['criterion']:<24}{row['isc']:>12.4g}{row['baseline']:>12.4g}"
              f"   (reference {row['reference_isc']} vs {row['reference_baseline']})")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iscpomdp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("build-grid", help="write the grid POMDP model file")
    g.add_argument("--config", default="fig1-approx",
                   help="grid config file, or 'fig1-approx' for the shipped layout")
    g.add_argument("--out", required=True)
    g.add_argument("--isc-cost-out", help="also write the initial-state cost file")
    g.add_argument("--kappa-out", help="also write the baseline corner cost file")
    g.set_defaults(func=cmd_build_grid)

    s = sub.add_parser("solve", help="compute an alpha-vector policy")
    s.add_argument("--model", required=True)
    costs = s.add_mutually_exclusive_group(required=True)
    costs.add_argument("--isc-cost", help="initial-state cost file (solves the augmented model)")
    costs.add_argument("--kappa", help="state cost file (solves the plain model)")
    s.add_argument("--psi", help="belief cost, e.g. 'entropy:0.5'")
    s.add_argument("--discount", type=float)
    s.add_argument("--time-budget", type=float, default=300.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-points", type=int, default=500)
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--horizon-bound", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="Monte Carlo evaluation of a policy")
    m.add_argument("--model", required=True)
    m.add_argument("--policy", required=True)
    m.add_argument("--arm", choices=("augmented", "base"), required=True)
    m.add_argument("--isc-cost", help="initial-state cost used for scoring and goals")
    m.add_argument("--grid", help="grid config (or 'fig1-approx') instead of --isc-cost")
    m.add_argument("--horizon", type=int, default=10)
    m.add_argument("--runs", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--trajectories", help="optional JSON-lines file of full trajectories")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="compare an ISC run file with a baseline run file")
    r.add_argument("--isc", required=True)
    r.add_argument("--base", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except BudgetTooSmall as e:
        log.error("%s", e)
        return EXIT_BUDGET
    except (_Invalid, IscPomdpError, OSError, KeyError, json.JSONDecodeError) as e:
        log.error("%s", e)
        return EXIT_INVALID
    except ValueError as e:
        log.error("%s", e)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
