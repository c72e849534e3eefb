"""Command line entry point.

    repsim --scenario FILE [--seed N] [--rtt-ms N] [--mode M] [--trace FILE]
    repsim --serve PORT [--seed N] [--rtt-ms N] [--mode M] [--pace R] [--static DIR]
    repsim --report DIR [--runs N] [--tx N] [--seed N]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .gateway import Gateway, GatewayServer
from .replication import MODES
from .scenario import run_scenario_file
from .system import System, SystemConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repsim",
        description="Journal-replication demonstration system: consistency "
                    "groups, snapshots, operator control plane, failover verifier.")
    action = parser.add_mutually_exclusive_group(required=True)
    action.add_argument("--scenario", metavar="FILE", help="run a scenario file")
    action.add_argument("--serve", metavar="PORT", type=int,
                        help="serve the gateway API (and console, if built)")
    action.add_argument("--report", metavar="DIR",
                        help="run the campaigns and write CSVs + figures")
    parser.add_argument("--seed", type=int, default=0, help="simulation seed")
    parser.add_argument("--rtt-ms", type=float, default=100.0,
                        help="inter-site round-trip time in simulated ms")
    parser.add_argument("--mode", choices=MODES, default="grouped",
                        help="replication mode the operator applies for the "
                             "standard backup tag")
    parser.add_argument("--trace", metavar="FILE", help="write the event trace here")
    parser.add_argument("--pace", type=float, default=1.0,
                        help="serve mode: simulated-to-real time ratio")
    parser.add_argument("--static", metavar="DIR",
                        help="serve mode: console static files directory")
    parser.add_argument("--runs", type=int, default=100,
                        help="report mode: seeded runs per campaign")
    parser.add_argument("--tx", type=int, default=500,
                        help="report mode: transactions per run")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = SystemConfig(seed=args.seed, rtt_ms=args.rtt_ms,
                          default_mode=args.mode,
                          trace=args.trace is not None)

    if args.scenario:
        system = System(config)
        code, report = run_scenario_file(args.scenario, system)
        sys.stdout.write(report)
        if args.trace:
            system.write_trace(args.trace)
        return code

    if args.report:
        from .report import generate_report
        summary = generate_report(args.report, runs=args.runs, count=args.tx,
                                  base_seed=args.seed)
        print(f"report written to {args.report}: per_volume collapse rate "
              f"{summary['collapse_rate']:.2f} over {summary['runs']} runs")
        return 0

    static = args.static
    if static is None:
        default_static = Path("frontend") / "dist"
        if default_static.is_dir():
            static = str(default_static)
    system = System(config)
    gateway = Gateway(system, static_dir=static)
    server = GatewayServer(gateway, args.serve, pace_ratio=args.pace)
    print(f"repsim gateway on http://127.0.0.1:{server.port} "
          f"(seed={args.seed}, pace={args.pace}x)")
    if static:
        print(f"console: http://127.0.0.1:{server.port}/ (from {static})")
    server.serve_forever()
    return 0


if __name__ == "__main__":
    sys.exit(main())
