"""Client agent logic.

One ClientAgent per machine: registers with the manager, heartbeats a
resource snapshot, accepts dispatched runs, prepares images and files, runs
each instance detached through an executor backend, polls for cancellations,
and delivers output bundles with at-least-once retry. Every run is driven by
its own supervisor thread; shared state lives behind one lock.
"""

from __future__ import annotations

import base64
import dataclasses
import hashlib
import os
import shutil
import socket
import threading
import time
from pathlib import Path

import httpx
import psutil

from gridforge.agent.config import AgentConfig
from gridforge.agent.sampler import PsutilSampler
from gridforge.agent.store import AgentStore
from gridforge.bundles import make_bundle, unzip_to
from gridforge.errors import BuildFailed, StartFailed
from gridforge.executor import make_backend
from gridforge.executor.base import ExecPhase, ExecSpec, ExecutorBackend, ResourceLimits
from gridforge.executor.container import CONTAINER_DIRS
from gridforge.headers import render_header_args
from gridforge.model import PayloadKind, ResourceSnapshot, RunHeader
from gridforge.serialization import to_wire

# Local run phases, in rough lifecycle order.
PHASE_ACCEPTED = "accepted"
PHASE_BUILDING = "building"
PHASE_STAGING = "staging"
PHASE_BARRIER = "waiting_barrier"
PHASE_RUNNING = "running"
PHASE_DELIVERING = "delivering"
PHASE_FINISHED = "finished"

_FETCH_RETRIES = 5


@dataclasses.dataclass
class LocalRun:
    run_id: int
    request_id: int
    rank: int
    attempt: int
    envelope: dict
    workdir: str
    app_dir: str
    checkpoint_dir: str
    output_dir: str
    phase: str = PHASE_ACCEPTED
    cancel_requested: bool = False
    handle_id: str | None = None
    rendezvous_port: int | None = None
    launches: int = 0


class ClientAgent:
    def __init__(
        self,
        config: AgentConfig,
        backend: ExecutorBackend | None = None,
        sampler=None,
    ):
        self.config = config
        self.workdir_root = os.path.abspath(config.workdir_root)
        self.runs_dir = os.path.join(self.workdir_root, "runs")
        self.files_dir = os.path.join(self.workdir_root, "files")
        for path in (self.workdir_root, self.runs_dir, self.files_dir):
            _makedirs_traversable(path)
        if backend is None:
            backend = make_backend(
                config.backend, os.path.join(self.workdir_root, "backend")
            )
        self.backend = backend
        self.sampler = sampler or PsutilSampler()
        self.store = AgentStore(os.path.join(self.workdir_root, "agent.db"))
        self._http = httpx.Client(
            base_url=config.manager_url.rstrip("/"),
            headers={"Authorization": f"Bearer {config.token}"},
            timeout=config.manager_call_timeout_s,
        )

        self._lock = threading.RLock()
        self._runs: dict[int, LocalRun] = {}
        self._build_locks: dict[str, threading.Lock] = {}
        self._file_locks: dict[int, threading.Lock] = {}
        self._payload_locks: dict[int, threading.Lock] = {}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

        self.client_id: int | None = None
        self.partitioned = False  # fault injection: behave as if unplugged
        self._reported_accepting = True  # last accepting_new the manager heard
        self._last_snapshot = ResourceSnapshot(taken_at=time.time())

        # Instrumentation read by tests and the harness.
        self.build_counts: dict[str, int] = {}
        self.file_fetch_counts: dict[int, int] = {}
        self.launched_specs: list[ExecSpec] = []

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self.register()
        for target, name in (
            (self._heartbeat_loop, "heartbeat"),
            (self._cancellation_loop, "cancellations"),
        ):
            thread = threading.Thread(
                target=target, name=f"agent-{name}", daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self.backend.shutdown()
        self.store.close()
        self._http.close()

    def register(self) -> None:
        """Announce this machine; retried until the manager answers."""
        config = self.config
        body = {
            "agent_key": config.agent_key or f"{config.host}:{config.port}",
            "host": config.host,
            "port": config.port,
            "has_gpu": config.has_gpu,
            "cores": config.cores or psutil.cpu_count() or 1,
            "ram_mb": config.ram_mb or psutil.virtual_memory().total >> 20,
            "config": to_wire(config.client_config()),
        }
        while not self._stop.is_set():
            try:
                resp = self._http.post("/api/v1/clients/register", json=body)
                if resp.status_code == 200:
                    self.client_id = resp.json()["client_id"]
                    self.heartbeat_once()
                    return
            except httpx.HTTPError:
                pass
            self._stop.wait(self.config.register_retry_backoff_s)

    # -- status monitor ------------------------------------------------------

    def heartbeat_once(self) -> None:
        try:
            snapshot = self.sampler.sample()
        except Exception:
            snapshot = dataclasses.replace(self._last_snapshot, stale=True)
        accepting = snapshot.cpu_pct < self.config.cpu_refusal_threshold_pct
        if self.partitioned:
            return
        try:
            resp = self._http.post(
                f"/api/v1/clients/{self.client_id}/heartbeat",
                json={"snapshot": to_wire(snapshot), "accepting_new": accepting},
            )
        except httpx.HTTPError:
            return
        if resp.status_code == 200:
            # Only what the manager actually heard governs accept_run.
            self._reported_accepting = accepting
            self._last_snapshot = snapshot

    def _heartbeat_loop(self) -> None:
        while not self._stop.is_set():
            self._stop.wait(self.config.heartbeat_interval_s)
            if self._stop.is_set():
                return
            self.heartbeat_once()

    # -- cancellation poll ----------------------------------------------------

    def poll_cancellations_once(self) -> list[int]:
        if self.partitioned or self.client_id is None:
            return []
        try:
            resp = self._http.get(f"/api/v1/clients/{self.client_id}/cancellations")
            if resp.status_code != 200:
                return []
            notices = resp.json()["cancellations"]
        except httpx.HTTPError:
            return []
        killed = []
        for notice in notices:
            run = self._runs.get(notice["run_id"])
            if run is not None and run.phase != PHASE_FINISHED:
                run.cancel_requested = True
                if run.handle_id is not None:
                    self.backend.kill(run.handle_id)
                killed.append(run.run_id)
        if notices:
            try:
                self._http.post(
                    f"/api/v1/clients/{self.client_id}/cancellations/ack",
                    json={"notice_ids": [n["notice_id"] for n in notices]},
                )
            except httpx.HTTPError:
                pass  # unacked notices are redelivered next poll
        return killed

    def _cancellation_loop(self) -> None:
        while not self._stop.is_set():
            self._stop.wait(self.config.cancellation_poll_interval_s)
            if self._stop.is_set():
                return
            self.poll_cancellations_once()

    # -- dispatch intake ------------------------------------------------------

    def accept_run(self, envelope: dict) -> dict:
        with self._lock:
            run_id = int(envelope["run_id"])
            existing = self._runs.get(run_id)
            if existing is not None:  # redelivered dispatch: same answer
                ack = {"accepted": True}
                if existing.rendezvous_port is not None:
                    ack["rendezvous_port"] = existing.rendezvous_port
                return ack
            if not self._reported_accepting:
                return {"accepted": False, "reason": "cpu threshold"}
            live = sum(1 for r in self._runs.values() if r.phase != PHASE_FINISHED)
            if live >= self.config.max_concurrent_runs:
                return {"accepted": False, "reason": "at capacity"}

            workdir = os.path.join(
                self.runs_dir, f"run{run_id}_a{envelope.get('attempt', 1)}"
            )
            run = LocalRun(
                run_id=run_id,
                request_id=int(envelope["request_id"]),
                rank=int(envelope["rank"]),
                attempt=int(envelope.get("attempt", 1)),
                envelope=envelope,
                workdir=workdir,
                app_dir=os.path.join(workdir, "app"),
                checkpoint_dir=os.path.join(workdir, "checkpoint"),
                output_dir=os.path.join(workdir, "output"),
            )
            for path in (workdir, run.app_dir, run.checkpoint_dir,
                         run.output_dir):
                _makedirs_traversable(path)
            if envelope.get("parallel") and run.rank == 0:
                run.rendezvous_port = _reserve_port()
            self._runs[run_id] = run
            self.store.upsert_run(
                run_id, run.request_id, run.rank, run.attempt, run.phase, workdir
            )
            supervisor = threading.Thread(
                target=self._supervise, args=(run,),
                name=f"run-{run_id}", daemon=True,
            )
            supervisor.start()
            self._threads.append(supervisor)
            ack = {"accepted": True}
            if run.rendezvous_port is not None:
                ack["rendezvous_port"] = run.rendezvous_port
            return ack

    def run_info(self, run_id: int) -> dict | None:
        run = self._runs.get(run_id)
        if run is None:
            return None
        return {"known": True, "phase": run.phase, "rank": run.rank}

    def relay_progress(self, run_id: int, percent: float, message: str) -> bool:
        run = self._runs.get(run_id)
        if run is None or self.partitioned or self.client_id is None:
            return False
        try:
            self._http.post(
                f"/api/v1/clients/{self.client_id}/runs/{run_id}/progress",
                json={"percent": percent, "message": message},
            )
            return True
        except httpx.HTTPError:
            return False

    def set_partitioned(self, on: bool) -> None:
        self.partitioned = on

    # -- run supervisor -------------------------------------------------------

    def _supervise(self, run: LocalRun) -> None:
        try:
            image_ref = self._ensure_image(run)
            if image_ref is None or run.cancel_requested:
                return
            if not self._stage(run):
                return
            master_addr, master_port = "127.0.0.1", 0
            if run.envelope.get("parallel"):
                released = self._await_barrier(run)
                if released is None:
                    return
                master_addr, master_port = released
            self._execute_and_deliver(run, image_ref, master_addr, master_port)
        except Exception as exc:  # never die silently: the rank would hang
            self._deliver_result(run, "failed", obs=f"agent error: {exc!r}")
        finally:
            self._set_phase(run, PHASE_FINISHED)
            if not self.config.keep_workdirs and not self._stop.is_set():
                shutil.rmtree(run.workdir, ignore_errors=True)

    def _set_phase(self, run: LocalRun, phase: str) -> None:
        run.phase = phase
        self.store.set_phase(run.run_id, phase)

    # -- image monitor ---------------------------------------------------------

    def _ensure_image(self, run: LocalRun) -> str | None:
        spec = self._fetch_json(
            run, f"/api/v1/domains/{run.envelope['domain_id']}/spec"
        )
        if spec is None:
            return None
        recipe = spec["build_recipe"]
        manifest = spec["dependency_manifest"]
        digest = spec["content_hash"]
        if self.backend.has_image(recipe, manifest):
            return self.backend.build(recipe, manifest)
        self._set_phase(run, PHASE_BUILDING)
        self._report_status(run, "build_started")
        with self._lock:
            build_lock = self._build_locks.setdefault(digest, threading.Lock())
        with build_lock:  # concurrent demand waits on exactly one build
            fresh = not self.backend.has_image(recipe, manifest)
            try:
                image_ref = self.backend.build(recipe, manifest)
            except BuildFailed as exc:
                with open(os.path.join(run.output_dir, "output.txt"), "ab") as fh:
                    fh.write(exc.log.encode() if exc.log else str(exc).encode())
                self._deliver_result(run, "failed", obs=f"build failed: {exc}")
                return None
            if fresh:
                self.build_counts[digest] = self.build_counts.get(digest, 0) + 1
        return image_ref

    # -- staging ---------------------------------------------------------------

    def _stage(self, run: LocalRun) -> bool:
        self._set_phase(run, PHASE_STAGING)
        payload = self._fetch_payload(run)
        if payload is None:
            return False
        kind = PayloadKind(run.envelope.get("payload_kind", "single"))
        if kind == PayloadKind.SINGLE:
            target = os.path.join(run.app_dir, run.envelope["payload_filename"])
            with open(target, "wb") as fh:
                fh.write(payload)
            os.chmod(target, 0o644)
        else:
            unzip_to(payload, Path(run.app_dir))
        for shared in run.envelope.get("shared_files", []):
            local = self._ensure_shared_file(run, shared)
            if local is None:
                return False
            dest = os.path.join(run.app_dir, shared["name"])
            shutil.copyfile(local, dest)
            os.chmod(dest, 0o444)  # read-only inside the sandbox
        return True

    def _fetch_payload(self, run: LocalRun) -> bytes | None:
        process_id = int(run.envelope["process_id"])
        with self._lock:
            payload_lock = self._payload_locks.setdefault(
                process_id, threading.Lock()
            )
        with payload_lock:
            cached = self.store.cached_payload(process_id)
            if cached and os.path.exists(cached):
                with open(cached, "rb") as fh:
                    return fh.read()
            data = self._fetch_bytes(
                run, f"/api/v1/processes/{process_id}/payload"
            )
            if data is None:
                return None
            path = os.path.join(self.files_dir, f"payload_{process_id}")
            with open(path, "wb") as fh:
                fh.write(data)
            self.store.remember_payload(process_id, path)
            return data

    def _ensure_shared_file(self, run: LocalRun, shared: dict) -> str | None:
        """Fetch-once per agent: later runs reuse the on-disk copy."""
        file_id = int(shared["file_id"])
        digest = shared["content_hash"]
        with self._lock:
            file_lock = self._file_locks.setdefault(file_id, threading.Lock())
        with file_lock:
            cached = self.store.cached_file(file_id, digest)
            if cached and os.path.exists(cached):
                return cached
            data = self._fetch_bytes(
                run,
                f"/api/v1/files/{file_id}/content",
                params={"client_id": self.client_id},
            )
            if data is None:
                return None
            if hashlib.sha256(data).hexdigest() != digest:
                self._deliver_result(
                    run, "failed", obs=f"shared file {file_id} digest mismatch"
                )
                return None
            path = os.path.join(self.files_dir, f"file_{file_id}_{digest[:12]}")
            with open(path, "wb") as fh:
                fh.write(data)
            os.chmod(path, 0o444)
            self.store.remember_file(file_id, path, digest)
            self.file_fetch_counts[file_id] = self.file_fetch_counts.get(file_id, 0) + 1
            return path

    # -- barrier -----------------------------------------------------------------

    def _await_barrier(self, run: LocalRun) -> tuple[str, int] | None:
        self._set_phase(run, PHASE_BARRIER)
        self._report_status(run, "barrier_wait")
        while not self._stop.is_set() and not run.cancel_requested:
            if not self.partitioned:
                try:
                    resp = self._http.get(f"/api/v1/barrier/{run.request_id}")
                    if resp.status_code == 200:
                        answer = resp.json()
                        if answer.get("release"):
                            return answer["master_addr"], int(answer["master_port"])
                except httpx.HTTPError:
                    pass
            self._stop.wait(self.config.barrier_poll_interval_s)
        return None

    # -- execution ----------------------------------------------------------------

    def _execute_and_deliver(
        self, run: LocalRun, image_ref: str, master_addr: str, master_port: int
    ) -> None:
        envelope = run.envelope
        if self.backend.containerized:
            app_dir = CONTAINER_DIRS["app_dir"]
            checkpoint_dir = CONTAINER_DIRS["checkpoint_dir"]
            output_dir = CONTAINER_DIRS["output_dir"]
        else:
            app_dir, checkpoint_dir, output_dir = (
                run.app_dir, run.checkpoint_dir, run.output_dir
            )
        header = RunHeader(
            app_dir=app_dir,
            checkpoint_dir=checkpoint_dir,
            output_dir=output_dir,
            rank=run.rank,
            repetitions=int(envelope["repetitions"]),
            master_addr=master_addr,
            master_port=master_port,
            parameters=list(envelope.get("parameters", [])),
        )
        argv = render_header_args(header)
        env = dict(self.config.extra_env)
        env["GF_RUN_ID"] = str(run.run_id)
        env["GF_PROGRESS_URL"] = (
            f"http://{self.config.host}:{self.config.port}/progress/{run.run_id}"
        )

        while True:
            if run.cancel_requested or self._stop.is_set():
                return  # the manager canceled it; no result to send
            interactive = self._last_snapshot.interactive_user_present
            limits = ResourceLimits(
                cpu_share_pct=(
                    self.config.interactive_allocation_pct if interactive else 100.0
                ),
                memory_mb=self.config.memory_limit_mb or None,
            )
            spec = ExecSpec(
                image_ref=image_ref,
                entry_command=envelope["entry_command"],
                argv=tuple(argv),
                app_dir=run.app_dir,
                checkpoint_dir=run.checkpoint_dir,
                output_dir=run.output_dir,
                shared_file_paths=tuple(
                    os.path.join(run.app_dir, s["name"])
                    for s in envelope.get("shared_files", [])
                ),
                limits=limits,
                rendezvous_port=run.rendezvous_port,
                env=tuple(sorted(env.items())),
            )
            try:
                handle = self.backend.start(spec)
            except StartFailed as exc:
                self._deliver_result(run, "failed", obs=f"start failed: {exc}")
                return
            run.handle_id = handle.handle_id
            run.launches += 1
            self.launched_specs.append(spec)
            self._set_phase(run, PHASE_RUNNING)
            self._report_status(run, "started")

            final = self.backend.wait(handle.handle_id)
            if final.phase == ExecPhase.KILLED or run.cancel_requested:
                return
            if final.exit_code == 0:
                self._deliver_result(run, "succeeded")
                return
            if run.launches <= self.config.local_restart_limit:
                # Abnormal exit: relaunch in place; checkpoint_dir survives so
                # user code can resume from its last recovery point.
                continue
            self._deliver_result(run, "failed", exit_code=final.exit_code)
            return

    # -- result delivery -------------------------------------------------------

    def _report_status(self, run: LocalRun, event: str, obs: str = "") -> None:
        """Advisory state echo; losses are bridged manager-side."""
        if self.partitioned or self.client_id is None:
            return
        try:
            self._http.post(
                f"/api/v1/clients/{self.client_id}/runs/{run.run_id}/status",
                json={"event": event, "obs": obs},
            )
        except httpx.HTTPError:
            pass

    def _deliver_result(
        self, run: LocalRun, outcome: str, exit_code: int | None = None,
        obs: str = "",
    ) -> bool:
        """At-least-once delivery: retried until acknowledged or rejected."""
        self._set_phase(run, PHASE_DELIVERING)
        bundle = make_bundle(run.run_id, Path(run.output_dir))
        body = {
            "outcome": outcome,
            "exit_code": exit_code,
            "obs": obs,
            "bundle_b64": base64.b64encode(bundle.archive).decode("ascii"),
            "console_b64": base64.b64encode(bundle.console_log).decode("ascii"),
        }
        backoff = self.config.result_retry_backoff_s
        while not self._stop.is_set():
            if not self.partitioned:
                try:
                    resp = self._http.post(
                        f"/api/v1/clients/{self.client_id}/runs/{run.run_id}/result",
                        json=body,
                    )
                    if resp.status_code == 200:
                        return True
                    if resp.status_code in (404, 409, 422):
                        return False  # superseded or already settled: drop it
                except httpx.HTTPError:
                    pass  # manager offline: keep the bundle, retry
            self._stop.wait(backoff)
            backoff = min(backoff * 2, 8 * self.config.result_retry_backoff_s)
        return False

    # -- fetch helpers -----------------------------------------------------------

    def _fetch_json(self, run: LocalRun, path: str) -> dict | None:
        data = self._fetch_bytes(run, path, as_json=True)
        return data

    def _fetch_bytes(self, run: LocalRun, path: str, params: dict | None = None,
                     as_json: bool = False):
        last_error = "unreachable"
        for _ in range(_FETCH_RETRIES):
            if run.cancel_requested or self._stop.is_set():
                return None
            if not self.partitioned:
                try:
                    resp = self._http.get(path, params=params)
                    if resp.status_code == 200:
                        return resp.json() if as_json else resp.content
                    last_error = f"status {resp.status_code}"
                except httpx.HTTPError as exc:
                    last_error = repr(exc)
            self._stop.wait(self.config.result_retry_backoff_s)
        self._deliver_result(run, "failed", obs=f"fetch {path} failed: {last_error}")
        return None


def _makedirs_traversable(path: str) -> None:
    """Create a directory the sandbox's unprivileged child can traverse.

    os.makedirs honors the umask, which may strip world-execute; run
    directories must stay enterable after the backend drops privileges.
    """
    os.makedirs(path, exist_ok=True)
    os.chmod(path, 0o755)


def _reserve_port() -> int:
    """Pick a currently-free TCP port for the rank-0 rendezvous.

    Advisory: the socket is closed so the user process can bind it. The window
    between probe and bind is small and acceptable for coordination traffic.
    """
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("", 0))
        return sock.getsockname()[1]
