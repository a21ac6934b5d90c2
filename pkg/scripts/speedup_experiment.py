"""Measure fan-out speedup: K sleeps in one rank vs K single-sleep ranks.

Both phases run through the platform so the comparison includes identical
dispatch, staging, and result-delivery overheads. With N single-slot clients
the parallel phase approaches sequential/N as K grows.

Usage:
    python scripts/speedup_experiment.py
    python scripts/speedup_experiment.py --k 20 --clients 6 --sleep-s 2.0
"""

from __future__ import annotations

import argparse
import time

from gridforge.harness.cluster import Cluster
from gridforge.harness.workloads import workload_source


def timed_request(cluster: Cluster, domain_id: int, process_id: int,
                  timeout: float, **spec) -> float:
    start = time.monotonic()
    request_id = cluster.submit(domain_id, process_id, **spec)
    cluster.wait_request(request_id, timeout=timeout)
    return time.monotonic() - start


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="sequential vs fan-out timing")
    parser.add_argument("--k", type=int, default=20, help="work units")
    parser.add_argument("--clients", type=int, default=6)
    parser.add_argument("--sleep-s", type=float, default=2.0,
                        help="nominal seconds per work unit")
    parser.add_argument("--time-compression", type=float, default=10.0)
    args = parser.parse_args(argv)

    with Cluster(
        n_agents=args.clients,
        time_compression=args.time_compression,
        slots_per_agent=1,
    ) as cluster:
        domain_id = cluster.seed_domain()
        process_id = cluster.seed_process(
            "sleeper", workload_source("sleep_per_rank")
        )
        budget = args.k * args.sleep_s * 3 + 60

        sequential = timed_request(
            cluster, domain_id, process_id, budget,
            repetitions=1, parameters=[str(args.sleep_s), str(args.k)],
        )
        parallel = timed_request(
            cluster, domain_id, process_id, budget,
            repetitions=args.k, parameters=[str(args.sleep_s)],
        )

    ideal = sequential / args.clients
    print(f"work units:        {args.k} x {args.sleep_s:.1f}s nominal")
    print(f"sequential:        {sequential:7.2f}s (one rank looping)")
    print(f"parallel:          {parallel:7.2f}s ({args.clients} clients, 1 slot each)")
    print(f"speedup:           {sequential / parallel:7.2f}x")
    print(f"ideal bound:       {ideal:7.2f}s (sequential / clients)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
