"""Command line front end.

Exit codes: 0 analysis completed (whatever the verdict), 2 bad input,
3 a resource cap was hit.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from typing import Sequence

from . import analysis, equilibrium, optimum, sim
from .core import CapacityReached, NodeCapExceeded, Params, QueueError, contract_violations
from .regimes import get_regime

EXIT_OK, EXIT_INPUT, EXIT_CAP = 0, 2, 3


def _emit(payload: dict, fmt: str, table: str, out) -> None:
    if fmt == "json":
        json.dump(payload, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        out.write(table)


def _params(args) -> Params:
    return Params(args.lam, args.mu, args.cost, args.reward)


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="arrival rate")
    p.add_argument("--mu", type=float, required=True, help="service rate")
    p.add_argument("--cost", type=float, required=True, help="waiting cost per unit time")
    p.add_argument("--reward", type=float, required=True, help="reward on service")


def _add_bounds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-n", type=int, default=analysis.DEFAULT_MAX_N)
    p.add_argument("--node-cap", type=int, default=analysis.DEFAULT_NODE_CAP)


def cmd_check(args, out) -> int:
    regime = get_regime(args.regime)
    graph = analysis.build_state_graph(regime, args.max_n, args.node_cap)
    report = analysis.check_universal_optimality(regime, graph=graph)
    payload = report.to_dict(regime)
    if args.check_balking:
        payload["balking_violations"] = [
            {"law": v.law, "state": v.state, "detail": v.detail}
            for v in contract_violations(regime, graph.nodes, check_balking=True)
            if v.law == "balking"
        ]
    lines = [
        f"regime      {regime.name}",
        f"max-n       {args.max_n}  ({len(graph)} states)",
        f"verdict     {report.verdict.value}",
        f"preemption  {'yes' if report.preemption_exists else 'NONE (necessary condition fails)'}",
    ]
    for v in report.violations:
        lines.append(f"  back-placement at non-maximal {regime.key(v.state)}: "
                     + " -> ".join(regime.key(s) for s in v.path))
    _emit(payload, args.format, "\n".join(lines) + "\n", out)
    return EXIT_OK


def cmd_threshold(args, out) -> int:
    params = _params(args)
    th = optimum.naor_threshold(params, args.cap)
    n_rows = args.curve if args.curve else max(th.n_star + 1, 1)
    if args.format == "csv":
        optimum.write_curve_csv(params, n_rows, out)
        return EXIT_OK
    rows = optimum.curve_rows(params, n_rows)
    payload = {
        "schema": "queue-regimes/threshold/v1",
        "params": params.as_dict(),
        "n_star": th.n_star,
        "tie": th.tie,
        "knife_edge": th.knife_edge,
        "individual_threshold": optimum.individual_threshold(params),
        "curve": rows,
    }
    buf = io.StringIO()
    buf.write(f"n* = {th.n_star}{'  (tie)' if th.tie else ''}\n")
    buf.write(f"{'n':>4} {'theta':>14} {'T':>14} {'D':>14} {'W':>14}\n")
    for row in rows:
        buf.write(f"{row['n']:>4} {row['theta']:>14.8g} {row['T']:>14.8g} {row['D']:>14.8g} {row['W']:>14.8g}\n")
    _emit(payload, args.format, buf.getvalue(), out)
    return EXIT_OK


def cmd_verify_mpe(args, out) -> int:
    regime = get_regime(args.regime)
    report = equilibrium.verify_mpe(regime, _params(args), args.max_n, args.node_cap)
    lines = [
        f"regime   {regime.name}",
        f"n*       {report.threshold.n_star}{'  (knife edge: not judged)' if report.knife_edge else ''}",
        f"verdict  {report.verdict.value}  ({report.checked} decision points)",
    ]
    for d in report.deviations[: args.show]:
        lines.append(f"  state {regime.key(d.state)} position {d.position}: prescribed {d.prescribed}, "
                     f"staying worth {d.stay_value:.10g}")
    _emit(report.to_dict(regime), args.format, "\n".join(lines) + "\n", out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    regime = get_regime(args.regime)
    params = _params(args)
    cap = args.threshold if args.threshold is not None else optimum.naor_threshold(params).n_star
    config = sim.SimConfig(params, regime, equilibrium.ThresholdProfile(cap), args.rounds,
                           args.seed, args.replications, args.duration, args.node_cap)
    stats = sim.run_sim(config)
    if args.format == "csv":
        stats.write_csv(out)
        return EXIT_OK
    payload = stats.to_dict() | {"regime": regime.name, "threshold": cap, "params": params.as_dict(),
                                 "threshold_welfare": optimum.threshold_welfare(params, cap)}
    table = (f"seed {args.seed}  threshold {cap}\n"
             f"welfare rate {stats.welfare_rate:.6f} +- {stats.welfare_se:.6f}"
             f"  (birth-death value {payload['threshold_welfare']:.6f})\n"
             f"served {stats.served}  reneged {stats.reneged}\n")
    _emit(payload, args.format, table, out)
    return EXIT_OK


def cmd_estimate_dn(args, out) -> int:
    params = _params(args)
    est = sim.coupled_dn_estimate(params, args.n, args.rounds, args.replications, args.seed)
    exact = optimum.surplus(params, args.n)
    payload = est.to_dict() | {"n": args.n, "params": params.as_dict(), "exact": exact}
    table = (f"seed {args.seed}\nD_{args.n} estimate {est.estimate:.6f} +- {est.se:.6f}"
             f"  (exact {exact:.6f}, {est.blocks} excursions)\n")
    _emit(payload, args.format, table, out)
    return EXIT_OK


def cmd_graph(args, out) -> int:
    regime = get_regime(args.regime)
    graph = analysis.build_state_graph(regime, args.max_n, args.node_cap)
    dot = analysis.to_dot(graph)
    if args.dot and args.dot != "-":
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(dot)
    elif args.format != "json":
        out.write(dot)
        return EXIT_OK
    payload = {
        "schema": "queue-regimes/graph/v1",
        "regime": regime.name,
        "max_n": args.max_n,
        "nodes": [regime.key(x) for x in graph.nodes],
        "edges": len(graph.edges),
    }
    _emit(payload, args.format, f"{len(graph)} states, {len(graph.edges)} edges written to {args.dot}\n", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="queue-regimes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="look for back-placement at non-maximal states")
    p.add_argument("--regime", required=True)
    _add_bounds(p)
    p.add_argument("--check-balking", action="store_true", help="also test rho(alpha(x), pi(x)) == x")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("threshold", help="socially optimal admission threshold and D-curve")
    _add_params(p)
    p.add_argument("--cap", type=int, default=optimum.DEFAULT_CAP)
    p.add_argument("--curve", type=int, default=0, help="number of curve rows (default n*+1)")
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("verify-mpe", help="check the optimal profile is an equilibrium")
    p.add_argument("--regime", required=True)
    _add_params(p)
    _add_bounds(p)
    p.add_argument("--show", type=int, default=10, help="deviations listed in table output")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_verify_mpe)

    p = sub.add_parser("simulate", help="simulate a threshold profile")
    p.add_argument("--regime", required=True)
    _add_params(p)
    p.add_argument("--threshold", type=int, default=None, help="admission cap (default n*)")
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", choices=["expected", "sampled"], default="expected")
    p.add_argument("--node-cap", type=int, default=analysis.DEFAULT_NODE_CAP)
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-dn", help="coupled estimate of D_n")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_estimate_dn)

    p = sub.add_parser("graph", help="reachable state graph as DOT")
    p.add_argument("--regime", required=True)
    _add_bounds(p)
    p.add_argument("--dot", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=["dot", "json"], default="dot")
    p.set_defaults(func=cmd_graph)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (NodeCapExceeded, equilibrium.NoConvergence, CapacityReached) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (QueueError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", [])[1:]:
            print(f"       {v.law} at {v.state!r}: {v.detail}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
