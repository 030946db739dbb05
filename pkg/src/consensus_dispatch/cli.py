"""Command line entry point.

Exit codes: 0 success, 1 invalid input or failed ``--check``, 2 max iterations
reached without consensus, 3 divergence, 4 oracle infeasibility or KKT failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .bus import DeliveryPolicy, format_event_log
from .consensus import DivergenceError, RunResult, SolverConfig, run_dispatch
from .graph import PRESETS, GraphError, preset_graph
from .oracle import DEFAULT_BALANCE_TOL, solve_centralized, verify_kkt
from .report import SummaryReport
from .scenario import ScenarioError, generate_scenario, load_scenario, write_scenario

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_DIVERGED = 3
EXIT_INFEASIBLE = 4

CHECK_LAMBDA_TOL = 1e-2
SWEEP_HEADER = ("value", "converged", "iterations", "lambda_spread", "status")


def _add_solver_flags(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--max-iters", type=int)
    if sweep:
        which = p.add_mutually_exclusive_group(required=True)
        which.add_argument("--epsilon", type=_float_list, help="comma separated gains")
        which.add_argument("--drop-prob", type=_float_list,
                           help="comma separated drop probabilities")
    else:
        p.add_argument("--epsilon", type=float, help="mismatch feedback gain")
        p.add_argument("--drop-prob", type=float)
    p.add_argument("--tol-lambda", type=float)
    p.add_argument("--tol-power", type=float)
    p.add_argument("--delay-rounds", type=int)
    p.add_argument("--seed", type=int, help="delivery policy seed")
    p.add_argument("--topology", choices=PRESETS, help="override the scenario graph")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus-dispatch",
        description="Distributed economic dispatch by incremental-cost consensus.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the distributed protocol over the message bus")
    _add_solver_flags(run)
    run.add_argument("--trace-out", type=Path)
    run.add_argument("--summary-out", type=Path)
    run.add_argument("--event-log", type=Path, help="write bus publish/deliver/drop CSV")
    run.add_argument("--check", action="store_true",
                     help="compare against the centralized oracle")

    orc = sub.add_parser("oracle", help="solve centrally and print a KKT report")
    _add_solver_flags(orc)
    orc.add_argument("--summary-out", type=Path)
    orc.add_argument("--balance-tol", type=float, default=DEFAULT_BALANCE_TOL)
    orc.add_argument("--check", action="store_true",
                     help="also run the distributed protocol and compare lambda")

    sweep = sub.add_parser("sweep", help="one run per parameter value")
    _add_solver_flags(sweep, sweep=True)
    sweep.add_argument("--out", type=Path, help="CSV path (stdout if omitted)")
    sweep.add_argument("--jobs", type=int, default=1)

    gen = sub.add_parser("generate", help="write a random scenario file")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n-gen", type=int, default=6)
    gen.add_argument("--n-load", type=int, default=10)
    gen.add_argument("--topology", choices=PRESETS, default="ring")
    gen.add_argument("--out", type=Path, required=True)
    return parser


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated number list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _load(args):
    scenario, graph, cfg = load_scenario(args.scenario)
    changes = {}
    for name in ("max_iters", "epsilon", "tol_lambda", "tol_power"):
        value = getattr(args, name)
        # sweep lists are applied per run, not here
        if value is not None and not isinstance(value, list):
            changes[name] = value
    pol = cfg.delivery
    drop = args.drop_prob if isinstance(args.drop_prob, float) else None
    delivery = DeliveryPolicy(
        drop_probability=pol.drop_probability if drop is None else drop,
        delay_rounds=pol.delay_rounds if args.delay_rounds is None else args.delay_rounds,
        rng_seed=pol.rng_seed if args.seed is None else args.seed,
    )
    changes["delivery"] = delivery
    if args.topology:
        graph = preset_graph(args.topology, scenario.n_nodes)
        changes["topology"] = args.topology
    return scenario, graph, replace(cfg, **changes)


def _summary(scenario, result: RunResult) -> SummaryReport:
    return SummaryReport.from_solution(
        scenario, result.solution, iterations=result.iterations,
        converged=result.converged, lambda_spread=result.lambda_spread,
    )


def _write_outputs(args, scenario, result: RunResult, out) -> None:
    summary = _summary(scenario, result)
    out.write(summary.format_table())
    if getattr(args, "trace_out", None):
        args.trace_out.write_text(result.trace.to_csv(), encoding="utf-8")
    if args.summary_out:
        args.summary_out.write_text(summary.to_json(), encoding="utf-8")
    if getattr(args, "event_log", None) and result.bus is not None:
        args.event_log.write_text(format_event_log(result.bus.events), encoding="utf-8")


def _compare(scenario, result: RunResult, out) -> bool:
    sol = solve_centralized(scenario)
    gap = abs(result.solution.lambda_star - sol.lambda_star)
    dist = result.solution.dispatch.as_array()
    ref = sol.dispatch.as_array()
    worst = float(abs(dist - ref).max())
    ok = gap <= CHECK_LAMBDA_TOL
    out.write(f"check: |lambda - lambda*| = {gap:.3e} $/kWh (limit {CHECK_LAMBDA_TOL:g}); "
              f"oracle lambda* = {sol.lambda_star:.4f}; max node deviation {worst:.3f} kW: "
              f"{'PASS' if ok else 'FAIL'}\n")
    return ok


def cmd_run(args, out=sys.stdout, err=sys.stderr) -> int:
    scenario, graph, cfg = _load(args)
    try:
        result = run_dispatch(scenario, graph, cfg, record_events=bool(args.event_log))
    except DivergenceError as exc:
        err.write(f"error: {exc}\n")
        if exc.result is not None:
            _write_outputs(args, scenario, exc.result, out)
        return EXIT_DIVERGED
    _write_outputs(args, scenario, result, out)
    if not result.converged:
        err.write(f"warning: no consensus after {result.iterations} iterations\n")
        return EXIT_NOT_CONVERGED
    if args.check and not _compare(scenario, result, out):
        return EXIT_INPUT
    return EXIT_OK


def cmd_oracle(args, out=sys.stdout, err=sys.stderr) -> int:
    scenario, graph, cfg = _load(args)
    sol = solve_centralized(scenario, args.balance_tol)
    summary = SummaryReport.from_solution(scenario, sol, iterations=None,
                                          converged=sol.feasible, source="oracle")
    out.write(summary.format_table())
    report = verify_kkt(scenario, sol)
    out.write("\n".join(report.lines()) + "\n")
    if args.summary_out:
        data = summary.to_dict()
        data["kkt_violations"] = [v.__dict__ for v in report.violations]
        args.summary_out.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    if not sol.feasible:
        err.write(f"error: no balanced dispatch (imbalance {sol.imbalance:.3e} kW)\n")
        return EXIT_INFEASIBLE
    if not report.ok:
        err.write("error: oracle solution fails the KKT check\n")
        return EXIT_INFEASIBLE
    if args.check:
        try:
            result = run_dispatch(scenario, graph, cfg)
        except DivergenceError as exc:
            err.write(f"error: {exc}\n")
            return EXIT_DIVERGED
        if not result.converged:
            err.write(f"warning: no consensus after {result.iterations} iterations\n")
            return EXIT_NOT_CONVERGED
        if not _compare(scenario, result, out):
            return EXIT_INPUT
    return EXIT_OK


def _sweep_one(job):
    scenario, graph, cfg = job
    try:
        result = run_dispatch(scenario, graph, cfg)
        status = "converged" if result.converged else "max_iters"
    except DivergenceError as exc:
        result, status = exc.result, "diverged"
    return result.converged, result.iterations, result.lambda_spread, status


def sweep_rows(scenario, graph, cfg, param: str, values, jobs: int = 1) -> list[tuple]:
    jobs_in = []
    for v in values:
        if param == "epsilon":
            c = replace(cfg, epsilon=v)
        else:
            c = replace(cfg, delivery=replace(cfg.delivery, drop_probability=v))
        jobs_in.append((scenario, graph, c))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_one, jobs_in))
    else:
        outcomes = [_sweep_one(j) for j in jobs_in]
    return [(v, *o) for v, o in zip(values, outcomes)]


def cmd_sweep(args, out=sys.stdout, err=sys.stderr) -> int:
    scenario, graph, cfg = _load(args)
    param, values = ("epsilon", args.epsilon) if args.epsilon else ("drop_prob", args.drop_prob)
    rows = sweep_rows(scenario, graph, cfg, param, values, args.jobs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for v, conv, iters, spread, status in rows:
        writer.writerow((repr(float(v)), int(conv), iters, repr(spread), status))
    if args.out:
        args.out.write_text(buf.getvalue(), encoding="utf-8")
    else:
        out.write(buf.getvalue())
    return EXIT_OK


def cmd_generate(args, out=sys.stdout, err=sys.stderr) -> int:
    doc = generate_scenario(args.seed, args.n_gen, args.n_load, topology=args.topology)
    write_scenario(doc, args.out)
    out.write(f"wrote {args.out} ({args.n_gen} generators, {args.n_load} consumers)\n")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "sweep": cmd_sweep, "generate": cmd_generate}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args, out, err)
    except (ScenarioError, GraphError, ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
