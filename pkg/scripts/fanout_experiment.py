"""Fan a large repetition count over a heterogeneous fleet and show who
served how much. Faster machines (higher speed factor) clear their sleep
workloads sooner, so they pick up proportionally more runs.

Usage:
    python scripts/fanout_experiment.py
    python scripts/fanout_experiment.py --repetitions 120 --sleep-s 1.5
"""

from __future__ import annotations

import argparse
import time
from collections import Counter

from gridforge.harness.cluster import Cluster
from gridforge.harness.workloads import workload_source
from gridforge.model import RunStatus


def success_counts_by_client(cluster: Cluster) -> Counter:
    counts: Counter = Counter()
    for event in cluster.trace.filter("run_transition"):
        if event["to_status"] == int(RunStatus.SUCCESS):
            counts[event["client_id"]] += 1
    return counts


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="heterogeneous fan-out shares")
    parser.add_argument("--repetitions", type=int, default=120)
    parser.add_argument("--sleep-s", type=float, default=1.5)
    parser.add_argument(
        "--speed-factors", default="1.0,1.2,1.5,3.0",
        help="comma-separated, one per client; higher is faster",
    )
    parser.add_argument("--time-compression", type=float, default=10.0)
    args = parser.parse_args(argv)

    factors = [float(x) for x in args.speed_factors.split(",")]
    with Cluster(
        n_agents=len(factors),
        time_compression=args.time_compression,
        slots_per_agent=1,
        speed_factors=factors,
    ) as cluster:
        domain_id = cluster.seed_domain()
        process_id = cluster.seed_process(
            "sleeper", workload_source("sleep_per_rank")
        )
        start = time.monotonic()
        request_id = cluster.submit(
            domain_id, process_id,
            repetitions=args.repetitions, parameters=[str(args.sleep_s)],
        )
        cluster.wait_request(
            request_id, timeout=args.repetitions * args.sleep_s + 120
        )
        elapsed = time.monotonic() - start
        counts = success_counts_by_client(cluster)
        by_key = {
            row.agent_key: counts.get(row.client_id, 0)
            for row in cluster._repo.list_clients()
        }

    print(f"{args.repetitions} repetitions in {elapsed:.1f}s")
    print(f"{'client':<10} {'speed':>6} {'runs':>6} {'share':>7}")
    for index, factor in enumerate(factors):
        served = by_key.get(f"agent{index}", 0)
        share = served / args.repetitions
        print(f"agent{index:<5} {factor:>6.1f} {served:>6} {share:>6.1%}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
