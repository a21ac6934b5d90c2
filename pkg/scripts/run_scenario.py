"""Run one declarative scenario file against a loopback cluster.

Usage:
    python scripts/run_scenario.py scenarios/redistribution.yaml
    python scripts/run_scenario.py scenarios/single_run.yaml --workdir /tmp/gf
"""

from __future__ import annotations

import argparse
import sys

from gridforge.errors import ScenarioTimeout
from gridforge.harness.scenarios import load_scenario, run_scenario


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="run a simulation scenario")
    parser.add_argument("scenario", help="path to a scenario YAML file")
    parser.add_argument(
        "--workdir", default=None,
        help="keep cluster state and the trace dump here instead of a temp dir",
    )
    args = parser.parse_args(argv)

    scenario = load_scenario(args.scenario)
    print(f"scenario: {scenario.name}")
    if scenario.description:
        print(f"  {scenario.description.strip()}")
    try:
        result = run_scenario(scenario, workdir=args.workdir)
    except ScenarioTimeout as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return 1
    for name, view in sorted(result.views.items()):
        statuses = [run["status"] for run in view["runs"]]
        print(f"  request {name}: {view['status']} (run statuses {statuses})")
    print(f"  properties checked: {', '.join(scenario.properties)}")
    print(f"  events recorded: {len(result.trace.events)}")
    if args.workdir:
        print(f"  trace: {result.trace_path}")
    print(f"  elapsed: {result.elapsed_s:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
