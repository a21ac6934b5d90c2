"""Declarative simulation scenarios: cluster shape, requests, faults, checks.

A scenario can be built in code or loaded from YAML. Running one brings up a
loopback cluster, submits the requests on schedule, fires the fault script,
waits for quiescence, and verifies expected request statuses plus the named
trace properties.
"""

from __future__ import annotations

import dataclasses
import time

import yaml

from gridforge.errors import ScenarioTimeout
from gridforge.harness.cluster import Cluster
from gridforge.harness.faults import FaultScript
from gridforge.harness.trace import Trace, assert_trace
from gridforge.harness.workloads import workload_source

DEFAULT_PROPERTIES = (
    "rank-uniqueness",
    "barrier-safety",
    "transfer-economy",
    "fifo-per-user",
    "filter-compliance",
)


@dataclasses.dataclass(frozen=True)
class RequestSpec:
    name: str
    workload: str
    repetitions: int = 1
    parameters: tuple[str, ...] = ()
    parallel: bool = False
    same_machine: bool = False
    needs_gpu: bool = False
    user: str = "alice"  # alice | bob
    rooms: tuple[str, ...] = ()  # empty = all rooms
    shared_files: tuple[str, ...] = ()  # names from Scenario.files
    at_s: float = 0.0


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    requests: tuple[RequestSpec, ...]
    description: str = ""
    n_agents: int = 3
    time_compression: float = 5.0
    slots_per_agent: int = 2
    gpu_agents: tuple[int, ...] = ()
    speed_factors: tuple[float, ...] = ()
    room_layout: dict | None = None
    retry_cap: int = 5
    local_restart_limit: int = 3
    files: dict[str, bytes] = dataclasses.field(default_factory=dict)
    faults: FaultScript = FaultScript()
    expect_statuses: dict[str, str] = dataclasses.field(default_factory=dict)
    properties: tuple[str, ...] = DEFAULT_PROPERTIES
    timeout_s: float = 90.0


@dataclasses.dataclass
class ScenarioResult:
    scenario: Scenario
    views: dict[str, dict]  # request name -> final request view
    trace: Trace
    elapsed_s: float
    trace_path: str
    bundles: dict[str, bytes]  # request name -> archive, completed requests only

    def status(self, name: str) -> str:
        return self.views[name]["status"]


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    cluster = raw.get("cluster", {})
    requests = tuple(
        RequestSpec(
            name=str(r["name"]),
            workload=str(r["workload"]),
            repetitions=int(r.get("repetitions", 1)),
            parameters=tuple(str(p) for p in r.get("parameters", [])),
            parallel=bool(r.get("parallel", False)),
            same_machine=bool(r.get("same_machine", False)),
            needs_gpu=bool(r.get("needs_gpu", False)),
            user=str(r.get("user", "alice")),
            rooms=tuple(r.get("rooms", [])),
            shared_files=tuple(r.get("shared_files", [])),
            at_s=float(r.get("at_s", 0.0)),
        )
        for r in raw.get("requests", [])
    )
    expect = raw.get("expect", {})
    return Scenario(
        name=str(raw["name"]),
        description=str(raw.get("description", "")),
        requests=requests,
        n_agents=int(cluster.get("n_agents", 3)),
        time_compression=float(cluster.get("time_compression", 5.0)),
        slots_per_agent=int(cluster.get("slots_per_agent", 2)),
        gpu_agents=tuple(cluster.get("gpu_agents", [])),
        speed_factors=tuple(cluster.get("speed_factors", [])),
        room_layout=cluster.get("room_layout"),
        retry_cap=int(cluster.get("retry_cap", 5)),
        local_restart_limit=int(cluster.get("local_restart_limit", 3)),
        files={
            str(f["name"]): str(f["content"]).encode()
            for f in raw.get("files", [])
        },
        faults=FaultScript.from_dicts(raw.get("faults", [])),
        expect_statuses={
            str(k): str(v) for k, v in expect.get("statuses", {}).items()
        },
        properties=tuple(expect.get("properties", DEFAULT_PROPERTIES)),
        timeout_s=float(raw.get("timeout_s", 90.0)),
    )


def run_scenario(scenario: Scenario, workdir: str | None = None) -> ScenarioResult:
    started = time.monotonic()
    cluster = Cluster(
        n_agents=scenario.n_agents,
        workdir=workdir,
        time_compression=scenario.time_compression,
        slots_per_agent=scenario.slots_per_agent,
        gpu_agents=set(scenario.gpu_agents),
        speed_factors=list(scenario.speed_factors) or None,
        room_layout=scenario.room_layout,
        retry_cap=scenario.retry_cap,
        local_restart_limit=scenario.local_restart_limit,
    )
    with cluster:
        domain_id = cluster.seed_domain()
        process_ids = {
            workload: cluster.seed_process(workload, workload_source(workload))
            for workload in sorted({r.workload for r in scenario.requests})
        }
        file_ids = {
            name: cluster.upload_file(name, content)
            for name, content in sorted(scenario.files.items())
        }

        base = time.monotonic()
        timers = cluster.run_script(scenario.faults, started_at=base)
        request_ids: dict[str, int] = {}
        try:
            for spec in sorted(scenario.requests, key=lambda r: r.at_s):
                delay = spec.at_s - (time.monotonic() - base)
                if delay > 0:
                    time.sleep(delay)
                caller = cluster.user if spec.user == "alice" else cluster.user2
                request_ids[spec.name] = cluster.submit(
                    domain_id,
                    process_ids[spec.workload],
                    caller=caller,
                    rooms=list(spec.rooms) or None,
                    repetitions=spec.repetitions,
                    parameters=list(spec.parameters),
                    parallel=spec.parallel,
                    same_machine=spec.same_machine,
                    needs_gpu=spec.needs_gpu,
                    shared_file_ids=[file_ids[f] for f in spec.shared_files],
                )

            views: dict[str, dict] = {}
            deadline = started + scenario.timeout_s
            for name, request_id in request_ids.items():
                remaining = max(0.5, deadline - time.monotonic())
                views[name] = cluster.wait_request(request_id, timeout=remaining)
        finally:
            for timer in timers:
                timer.cancel()

        mismatches = {
            name: (views[name]["status"], wanted)
            for name, wanted in scenario.expect_statuses.items()
            if views[name]["status"] != wanted
        }
        trace_path = cluster.dump_trace()
        if mismatches:
            detail = ", ".join(
                f"{name}: got {got!r} wanted {want!r}"
                for name, (got, want) in sorted(mismatches.items())
            )
            raise ScenarioTimeout(
                f"scenario {scenario.name}: unexpected statuses ({detail})",
                trace=cluster.trace,
            )
        context = cluster.filter_context()
        for prop in scenario.properties:
            assert_trace(cluster.trace, prop, **context)
        bundles = {
            name: cluster.bundle(request_id)
            for name, request_id in request_ids.items()
            if views[name]["status"] == "completed"
        }
        return ScenarioResult(
            scenario=scenario,
            views=views,
            trace=cluster.trace,
            elapsed_s=time.monotonic() - started,
            trace_path=trace_path,
            bundles=bundles,
        )
