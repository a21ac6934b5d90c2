"""A real manager and N real agents on loopback, driven as one object.

Everything communicates over actual HTTP: the manager's monitors ping the
agents, agents register/heartbeat/deliver results back, and user processes
run as real sandboxed subprocesses. Time compression divides the periods of
the control loops (monitors, heartbeats, polls) without touching workload
timing, so a scenario that needs three supervision passes does not need
thirty wall seconds.
"""

from __future__ import annotations

import os
import shutil
import socket
import tempfile
import threading
import time

import uvicorn

from gridforge.agent.api import create_agent_app
from gridforge.agent.config import AgentConfig
from gridforge.agent.core import ClientAgent
from gridforge.agent.sampler import ScriptedSampler
from gridforge.errors import ScenarioTimeout
from gridforge.harness.faults import FaultEvent, FaultKind, FaultScript
from gridforge.harness.trace import Trace
from gridforge.manager.api import create_app
from gridforge.manager.config import ManagerConfig, TokenInfo
from gridforge.manager.core import Manager
from gridforge.manager.monitors import Monitors
from gridforge.repository import Repository

USER_TOKEN = "tok-user"
USER2_TOKEN = "tok-user2"
ADMIN_TOKEN = "tok-admin"
AGENT_TOKEN = "tok-agent"

DEFAULT_TOKENS = {
    USER_TOKEN: TokenInfo(user="alice"),
    USER2_TOKEN: TokenInfo(user="bob"),
    ADMIN_TOKEN: TokenInfo(user="root", admin=True),
    AGENT_TOKEN: TokenInfo(user="fleet", agent=True),
}

_TERMINAL_REQUEST = {"completed", "failed", "canceled"}


class ServiceHost:
    """uvicorn on a daemon thread with a socket we bind ourselves.

    Pre-binding makes port 0 resolvable before the app starts and lets a
    restarted service reclaim its old port deterministically.
    """

    def __init__(self, app=None, host: str = "127.0.0.1", port: int = 0):
        self.app = app
        self.host = host
        self._sock = _bind_listener(host, port)
        self.port = self._sock.getsockname()[1]
        self._server: uvicorn.Server | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self, timeout: float = 10.0) -> None:
        if self.app is None:
            raise RuntimeError("ServiceHost.app must be set before start()")
        config = uvicorn.Config(self.app, log_level="critical", access_log=False)
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(
            target=self._server.run, kwargs={"sockets": [self._sock]},
            name=f"service-{self.port}", daemon=True,
        )
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if not self._thread.is_alive():
                raise RuntimeError(f"service on port {self.port} died on startup")
            if time.monotonic() >= deadline:
                raise RuntimeError(f"service on port {self.port} never started")
            time.sleep(0.01)

    def stop(self, timeout: float = 10.0) -> None:
        if self._server is not None:
            self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=timeout)
        try:
            self._sock.close()
        except OSError:
            pass


def _bind_listener(host: str, port: int, attempts: int = 50) -> socket.socket:
    last: OSError | None = None
    for _ in range(attempts):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
            sock.listen(128)
            return sock
        except OSError as exc:
            last = exc
            sock.close()
            time.sleep(0.1)
    raise last or OSError(f"could not bind {host}:{port}")


class AgentNode:
    """One simulated machine: agent threads, its HTTP endpoint, its sampler."""

    def __init__(self, name: str, index: int, config: AgentConfig,
                 host: ServiceHost, sampler: ScriptedSampler):
        self.name = name
        self.index = index
        self.config = config
        self.host = host
        self.sampler = sampler
        self.agent = ClientAgent(config, sampler=sampler)
        host.app = create_agent_app(self.agent)
        self.crashed = False

    def start(self) -> None:
        self.host.start()
        self.agent.start()

    def stop(self) -> None:
        self.agent.stop()
        self.host.stop()


class Cluster:
    def __init__(
        self,
        n_agents: int = 3,
        workdir: str | None = None,
        time_compression: float = 5.0,
        slots_per_agent: int = 2,
        gpu_agents: frozenset[int] | set[int] = frozenset(),
        speed_factors: list[float] | None = None,
        room_layout: dict[str, list[int]] | None = None,
        retry_cap: int = 5,
        local_restart_limit: int = 3,
        agent_overrides: dict | None = None,
    ):
        self.n_agents = n_agents
        if workdir is None:
            workdir = tempfile.mkdtemp(prefix="gfcluster-")
            self._owns_workdir = True
        else:
            os.makedirs(workdir, exist_ok=True)
            self._owns_workdir = False
        # The sandbox backend drops privileges; its children must be able to
        # traverse into the run directories from here down.
        os.chmod(workdir, 0o755)
        self.workdir = workdir
        self.compression = time_compression
        self.slots_per_agent = slots_per_agent
        self.gpu_agents = set(gpu_agents)
        self.speed_factors = speed_factors or [1.0] * n_agents
        if len(self.speed_factors) != n_agents:
            raise ValueError("need one speed factor per agent")
        self.room_layout = room_layout or {"main": list(range(n_agents))}
        self.retry_cap = retry_cap
        self.local_restart_limit = local_restart_limit
        self.agent_overrides = agent_overrides or {}

        self.trace = Trace()
        self.user = DEFAULT_TOKENS[USER_TOKEN]
        self.user2 = DEFAULT_TOKENS[USER2_TOKEN]
        self.admin = DEFAULT_TOKENS[ADMIN_TOKEN]

        self.manager: Manager | None = None
        self.manager_host: ServiceHost | None = None
        self._monitors: Monitors | None = None
        self._repo: Repository | None = None
        self._manager_port = 0
        self.agents: dict[str, AgentNode] = {}
        self.rooms: dict[str, int] = {}

    # -- lifecycle ---------------------------------------------------------

    def __enter__(self) -> "Cluster":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def start(self) -> None:
        self._manager_up()
        for i in range(self.n_agents):
            self._agent_up(f"agent{i}", i)
        self._wait_for_registration()
        self._assign_rooms()

    def close(self) -> None:
        for node in self.agents.values():
            if not node.crashed:
                node.stop()
        self._manager_down()
        if self._owns_workdir:
            shutil.rmtree(self.workdir, ignore_errors=True)

    # -- manager -----------------------------------------------------------

    def _manager_config(self) -> ManagerConfig:
        return ManagerConfig(
            host="127.0.0.1",
            port=self._manager_port,
            db_path=os.path.join(self.workdir, "manager.db"),
            tokens=dict(DEFAULT_TOKENS),
            time_compression=self.compression,
            retry_cap=self.retry_cap,
        )

    def _manager_up(self) -> None:
        host = ServiceHost(port=self._manager_port)
        self._manager_port = host.port
        config = self._manager_config()
        config.port = host.port
        self._repo = Repository(config.db_path)
        self.manager = Manager(config, self._repo, observer=self.trace.record)
        host.app = create_app(self.manager)
        host.start()
        self._monitors = Monitors(self.manager)
        self._monitors.start()
        self.manager_host = host

    def _manager_down(self) -> None:
        if self._monitors is not None:
            self._monitors.stop()
            self._monitors = None
        if self.manager_host is not None:
            self.manager_host.stop()
            self.manager_host = None
        if self.manager is not None:
            self.manager.close()
            self.manager = None
        if self._repo is not None:
            self._repo.close()
            self._repo = None

    def restart_manager(self) -> None:
        """Full stop and cold start on the same port and database."""
        self._manager_down()
        self._manager_up()

    @property
    def manager_url(self) -> str:
        return f"http://127.0.0.1:{self._manager_port}"

    @property
    def repo(self) -> Repository:
        """Direct repository handle for assertions that bypass the API."""
        assert self._repo is not None, "cluster is not running"
        return self._repo

    # -- agents --------------------------------------------------------------

    def _agent_up(self, name: str, index: int, port: int = 0) -> None:
        host = ServiceHost(port=port)
        extra_env = {"GF_SPEED_FACTOR": str(self.speed_factors[index])}
        overrides = dict(self.agent_overrides)
        overrides.setdefault("heartbeat_interval_s", 2 / self.compression)
        overrides.setdefault("cancellation_poll_interval_s", 2 / self.compression)
        overrides.setdefault("barrier_poll_interval_s", 0.5 / self.compression)
        overrides.setdefault("result_retry_backoff_s", 1 / self.compression)
        overrides.setdefault("register_retry_backoff_s", 1 / self.compression)
        config = AgentConfig(
            manager_url=self.manager_url,
            token=AGENT_TOKEN,
            agent_key=name,
            host="127.0.0.1",
            port=host.port,
            # Reused across crash/revive: a rebooted machine keeps its disk,
            # so cached files and built images must survive.
            workdir_root=os.path.join(self.workdir, name),
            backend="sandbox",
            max_concurrent_runs=self.slots_per_agent,
            local_restart_limit=self.local_restart_limit,
            has_gpu=index in self.gpu_agents,
            cores=2,
            ram_mb=2048,
            extra_env=extra_env,
            **overrides,
        )
        node = AgentNode(name, index, config, host, ScriptedSampler())
        self.agents[name] = node
        node.start()

    def _wait_for_registration(self, timeout: float = 30.0) -> None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.manager is not None:
                rows = self._repo.list_clients()
                if len(rows) >= self.n_agents:
                    return
            time.sleep(0.05)
        raise ScenarioTimeout("agents never registered", trace=self.trace)

    def _assign_rooms(self) -> None:
        key_to_id = {row.agent_key: row.client_id for row in self._repo.list_clients()}
        for room_name, indices in self.room_layout.items():
            room_id = self.manager.create_room(self.admin, room_name)
            self.rooms[room_name] = room_id
            for index in indices:
                self.manager.assign_client_to_room(
                    self.admin, key_to_id[f"agent{index}"], room_id
                )

    def node(self, target: str) -> AgentNode:
        return self.agents[target]

    def client_id_of(self, target: str) -> int:
        for row in self._repo.list_clients():
            if row.agent_key == target:
                return row.client_id
        raise KeyError(target)

    # -- faults --------------------------------------------------------------

    def apply_fault(self, event: FaultEvent) -> None:
        kind = event.kind
        if kind is FaultKind.MANAGER_CRASH:
            self._manager_down()
            return
        if kind is FaultKind.MANAGER_RESTART:
            self._manager_up()
            return
        node = self.node(event.target)
        if kind is FaultKind.DISCONNECT:
            node.agent.partitioned = True
        elif kind is FaultKind.REVIVE:
            if node.crashed:
                self._agent_up(event.target, node.index, port=node.host.port)
            else:
                node.agent.partitioned = False
        elif kind is FaultKind.CRASH:
            node.stop()
            node.crashed = True
        elif kind is FaultKind.USER_LOGIN:
            node.sampler.set_interactive(True)
        elif kind is FaultKind.USER_LOGOUT:
            node.sampler.set_interactive(False)
        elif kind is FaultKind.CPU_LOAD:
            node.sampler.set_cpu(event.pct)

    def run_script(self, script: FaultScript, started_at: float | None = None) -> list[threading.Timer]:
        """Schedule every fault relative to now (or to started_at)."""
        base = started_at if started_at is not None else time.monotonic()
        timers = []
        for event in script.events:
            delay = max(0.0, event.at_s - (time.monotonic() - base))
            timer = threading.Timer(delay, self.apply_fault, args=(event,))
            timer.daemon = True
            timer.start()
            timers.append(timer)
        return timers

    # -- catalog + request helpers -------------------------------------------

    def seed_domain(self, name: str = "py-base", recipe: str = "base: python3",
                    manifest: str = "") -> int:
        return self.manager.create_domain(self.user, name, recipe, manifest)

    def seed_process(self, name: str, source: bytes,
                     entry_command: str = "python3 main.py",
                     payload_filename: str = "main.py",
                     caller: TokenInfo | None = None) -> int:
        return self.manager.create_process(
            caller or self.user, name, entry_command, "single",
            payload_filename, source,
        )

    def upload_file(self, name: str, content: bytes) -> int:
        return self.manager.upload_file(self.user, name, content)

    def submit(self, domain_id: int, process_id: int, caller: TokenInfo | None = None,
               rooms: list[str] | None = None, **spec) -> int:
        room_ids = [self.rooms[r] for r in (rooms or list(self.rooms))]
        return self.manager.submit_request(
            caller or self.user,
            {"domain_id": domain_id, "process_id": process_id,
             "room_ids": room_ids, **spec},
        )

    def request_view(self, request_id: int) -> dict:
        return self.manager.get_request_view(self.admin, request_id)

    def wait_request(self, request_id: int, timeout: float = 60.0,
                     statuses: set[str] | None = None) -> dict:
        """Block until the request reaches a terminal (or given) status."""
        wanted = statuses or _TERMINAL_REQUEST
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.manager is not None:
                view = self.request_view(request_id)
                if view["status"] in wanted:
                    return view
            time.sleep(0.05)
        self.dump_trace()
        state = self.request_view(request_id)["status"] if self.manager else "manager down"
        raise ScenarioTimeout(
            f"request {request_id} stuck in {state!r} after {timeout}s",
            trace=self.trace,
        )

    def wait_all(self, request_ids: list[int], timeout: float = 120.0) -> dict[int, dict]:
        deadline = time.monotonic() + timeout
        views = {}
        for request_id in request_ids:
            remaining = max(0.5, deadline - time.monotonic())
            views[request_id] = self.wait_request(request_id, timeout=remaining)
        return views

    def bundle(self, request_id: int) -> bytes:
        return self.manager.get_request_bundle(self.admin, request_id)

    def dump_trace(self) -> str:
        path = os.path.join(self.workdir, "trace.jsonl")
        self.trace.dump(path)
        return path

    # -- context for trace properties ----------------------------------------

    def filter_context(self) -> dict:
        gpu_clients = set()
        client_rooms = {}
        for row in self._repo.list_clients():
            if row.has_gpu:
                gpu_clients.add(row.client_id)
            room_id = self._repo.room_of_client(row.client_id)
            if room_id is not None:
                client_rooms[row.client_id] = room_id
        return {"gpu_clients": gpu_clients, "client_rooms": client_rooms}
