"""Command-line entry point: ``evsiting <subcommand> --scenario FILE [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._validation import ValidationError, derive_seed, parse_placement
from .choice import choice_probabilities
from .estimators import apply_overrides
from .game import InfeasibleError, PlanningError, PolicyCapError, plan_multistage, solve_stage
from .grid import dispatch_with_ev, disturbance, solve_power_flow
from .market import Market
from .road import NoPathError
from .scenario import ScenarioParseError, load_scenario, save_stage_result, stage_result_to_dict
from .traffic import sample_trips, traffic_heatmap, write_heatmap_csv, write_heatmap_pgm

SUBCOMMANDS = ("validate", "demand", "powerflow", "prices", "solve-stage", "plan", "heatmap")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("scenario and output")
    g.add_argument("--scenario", required=True, help="scenario JSON file")
    g.add_argument("--out", default=".", help="output directory (created if missing)")
    g.add_argument("--seed", type=int, help="override the scenario RNG seed (unsigned integer)")
    g.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it (default 1)")
    o = p.add_argument_group("planner overrides")
    o.add_argument("--w", type=float, help="grid-disturbance penalty weight, $ per pu^2 (>= 0)")
    o.add_argument("--delay-max", type=float, help="max average delay probability, dimensionless in [0, 1]")
    o.add_argument("--coverage-min", type=float, help="coverage threshold, stations per route (>= 0)")
    o.add_argument("--dth", type=float, help="destination/coverage distance threshold, km")
    o.add_argument("--runs", type=int, help="Monte-Carlo runs per QoS estimate (>= 1)")
    o.add_argument("--outside-good", choices=("on", "off"), help="include home charging as an alternative")
    return p


def _placement_arg(p, what="joint placement"):
    p.add_argument(
        "--placement",
        help=f"{what} as one 0/1 string per provider separated by '|' or ',', e.g. 101,010,000 (default: all candidate sites built)",
    )


def _stage_arg(p):
    p.add_argument("--stage", type=int, default=1, help="1-based stage whose EV count is used (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="evsiting", description="Competitive multi-stage EV charging-station placement.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common()
    sub.add_parser("validate", parents=[common], help="check a scenario file")
    p = sub.add_parser("demand", parents=[common], help="choice probabilities and station demand (kWh)")
    _placement_arg(p)
    _stage_arg(p)
    p = sub.add_parser("powerflow", parents=[common], help="power flow with station load and disturbance B (pu^2)")
    _placement_arg(p)
    _stage_arg(p)
    p = sub.add_parser("prices", parents=[common], help="Bertrand equilibrium prices ($/kWh) for a joint placement")
    _placement_arg(p)
    _stage_arg(p)
    p = sub.add_parser("solve-stage", parents=[common], help="play one stage of the placement game")
    _stage_arg(p)
    _placement_arg(p, "stations carried over from earlier stages")
    sub.add_parser("plan", parents=[common], help="run every stage; writes one table per stage")
    p = sub.add_parser("heatmap", parents=[common], help="traffic heatmap of sampled trips (CSV + PGM)")
    _stage_arg(p)
    p.add_argument("--resolution", type=int, default=20, help="cells per side (default 20)")
    return parser


def _scenario(args):
    sc = load_scenario(args.scenario)
    og = None if args.outside_good is None else args.outside_good == "on"
    return apply_overrides(
        sc,
        w=args.w,
        delay_max=args.delay_max,
        coverage_min=args.coverage_min,
        d_th_km=args.dth,
        monte_carlo_runs=args.runs,
        outside_good=og,
        seed=args.seed,
    )


def _placement(args, sc, default_all=True):
    if args.placement is None:
        mask = sc.allowed_mask()
        return mask if default_all else np.zeros_like(mask)
    pl = parse_placement(args.placement, sc.n_sites)
    if pl.shape[0] != sc.n_providers:
        raise ValidationError(f"placement needs {sc.n_providers} rows, got {pl.shape[0]}")
    return pl


def _stage_index(args, sc):
    if not 1 <= args.stage <= len(sc.stages):
        raise ValidationError(f"--stage must lie in 1..{len(sc.stages)}")
    return args.stage - 1


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _cmd_validate(args, sc, out):
    return {"status": "ok", "sites": sc.n_sites, "agents": len(sc.agents), "providers": sc.n_providers, "stages": len(sc.stages)}


def _market(args, sc):
    idx = _stage_index(args, sc)
    return Market(sc, sc.stage_population(sc.stages[idx].ev_count))


def _cmd_demand(args, sc, out):
    market = _market(args, sc)
    pl = _placement(args, sc)
    eq = market.equilibrium(pl)
    prices = np.array(eq.prices)
    psi = market.demand(pl, prices)
    rows = ["provider,level,site_id,price,demand_kwh"]
    for k in range(sc.n_providers):
        for j in np.flatnonzero(pl[k]):
            rows.append(f"{k},{sc.providers[k].level},{sc.sites[j].id},{prices[k]!r},{psi[k, j]!r}")
    (out / "demand.csv").write_text("\n".join(rows) + "\n")
    table, alts = market.table(pl, prices)
    probs, outside = choice_probabilities(table) if alts or table.outside_good else (np.zeros((table.n_agents, 0)), np.ones(table.n_agents))
    header = ["agent_id"] + [f"p{k + 1}_site{sc.sites[j].id}" for k, j in alts] + ["outside"]
    lines = [",".join(header)]
    for a, row, o in zip(market.population, probs, outside):
        lines.append(",".join([str(a.id)] + [repr(float(v)) for v in row] + [repr(float(o))]))
    (out / "probabilities.csv").write_text("\n".join(lines) + "\n")
    return {"prices": list(eq.prices), "total_demand_kwh": psi.sum(axis=1).tolist(), "files": ["demand.csv", "probabilities.csv"]}


def _cmd_powerflow(args, sc, out):
    market = _market(args, sc)
    pl = _placement(args, sc)
    outcome = market.outcome(pl)
    base = solve_power_flow(sc.grid)
    load = {}
    for k in range(sc.n_providers):
        for j, site in enumerate(sc.sites):
            if outcome.demand[k, j]:
                load[site.bus] = load.get(site.bus, 0.0) + float(outcome.demand[k, j])
    gp, gq, sol = dispatch_with_ev(sc.grid, load, sc.planner.horizon_h, power_factor=sc.planner.ev_power_factor)
    report = {
        "converged": bool(sol.converged and base.converged),
        "iterations": sol.iterations,
        "max_residual_pu": sol.max_residual,
        "bus_ids": [b.id for b in sc.grid.buses],
        "vm_pu": sol.vm.tolist(),
        "va_rad": sol.va.tolist(),
        "gen_p_base_pu": base.gen_p.tolist(),
        "gen_q_base_pu": base.gen_q.tolist(),
        "gen_p_ev_pu": gp.tolist(),
        "gen_q_ev_pu": gq.tolist(),
        "station_load_kwh": {str(k): v for k, v in sorted(load.items())},
        "B_joint": disturbance((base.gen_p, base.gen_q), (gp, gq)),
        "B_per_provider": outcome.disturbance.tolist(),
    }
    _write_json(out / "powerflow.json", report)
    return {"B_joint": report["B_joint"], "B_per_provider": report["B_per_provider"], "converged": report["converged"]}


def _cmd_prices(args, sc, out):
    market = _market(args, sc)
    eq = market.equilibrium(_placement(args, sc))
    report = {"prices": list(eq.prices), "residuals": list(eq.residuals), "converged": eq.converged, "method": eq.method}
    _write_json(out / "prices.json", report)
    return report


def _cmd_solve_stage(args, sc, out):
    idx = _stage_index(args, sc)
    carried = _placement(args, sc, default_all=False)
    res = solve_stage(sc, idx, carried, threads=args.threads)
    save_stage_result(res, out / f"stage_{idx + 1}.csv", [p.level for p in sc.providers])
    _write_json(out / f"stage_{idx + 1}.json", stage_result_to_dict(res))
    return {"stage": res.label, "station_counts": list(res.station_counts), "prices": list(res.prices)}


def _cmd_plan(args, sc, out):
    levels = [p.level for p in sc.providers]
    try:
        results = plan_multistage(sc, threads=args.threads)
    except PlanningError as exc:
        for i, res in enumerate(exc.results):
            save_stage_result(res, out / f"stage_{i + 1}.csv", levels)
        raise
    for i, res in enumerate(results):
        save_stage_result(res, out / f"stage_{i + 1}.csv", levels)
    _write_json(out / "plan.json", [stage_result_to_dict(r) for r in results])
    return {"stages": len(results), "station_counts": [list(r.station_counts) for r in results]}


def _cmd_heatmap(args, sc, out):
    idx = _stage_index(args, sc)
    n = sc.stages[idx].ev_count
    rng = np.random.default_rng(derive_seed(sc.seed, "heatmap", idx))
    trips = sample_trips(sc, n, rng)
    grid = traffic_heatmap(trips, sc.network, resolution=args.resolution)
    write_heatmap_csv(grid, out / "heatmap.csv")
    write_heatmap_pgm(grid, out / "heatmap.pgm")
    return {"trips": len(trips), "visits": int(grid.sum()), "files": ["heatmap.csv", "heatmap.pgm"]}


_HANDLERS = {
    "validate": _cmd_validate,
    "demand": _cmd_demand,
    "powerflow": _cmd_powerflow,
    "prices": _cmd_prices,
    "solve-stage": _cmd_solve_stage,
    "plan": _cmd_plan,
    "heatmap": _cmd_heatmap,
}

_DOMAIN_ERRORS = (ValidationError, ScenarioParseError, NoPathError, InfeasibleError, PlanningError, PolicyCapError, KeyError, OSError)


def run(argv=None):
    """Execute one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        sc = _scenario(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = _HANDLERS[args.command](args, sc, out)
    except _DOMAIN_ERRORS as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ValidationError):
            report["problems"] = exc.problems
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
