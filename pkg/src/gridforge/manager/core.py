"""Manager business logic.

Owns every state mutation: registration, queueing, placement, dispatch,
supervision, retries, result collection, and aggregation. The REST layer is
a thin shell over these methods; the three monitor loops call the *_tick
methods. All writes go through the repository's serialized transactions, so
monitor interleavings cannot double-dispatch a rank or record two Successes.
"""

from __future__ import annotations

import dataclasses
import time
from typing import Callable

import httpx

from gridforge.bundles import OutputBundle, aggregate_outputs
from gridforge.errors import (
    AlreadyTerminal,
    Forbidden,
    NotParallel,
    NotReady,
    StaleAttempt,
    UnknownFile,
    UnknownRun,
    ValidationError,
)
from gridforge.manager.config import ManagerConfig, TokenInfo
from gridforge.model import (
    Availability,
    ClientConfig,
    ProcessRun,
    Request,
    RequestStatus,
    ResourceSnapshot,
    RunEvent,
    RunStatus,
    TERMINAL_RUN_STATUSES,
    Visibility,
    run_status_transition,
    validate_request,
)
from gridforge.repository import ClientRow, Repository

# What each agent-reported event drives the run into; used to treat repeats
# of an already-applied event as idempotent no-ops.
_EVENT_TARGETS = {
    RunEvent.BUILD_STARTED: RunStatus.BUILDING,
    RunEvent.BARRIER_WAIT: RunStatus.WAITING_BARRIER,
    RunEvent.STARTED: RunStatus.RUNNING,
    RunEvent.SUCCEEDED: RunStatus.SUCCESS,
    RunEvent.FAILED: RunStatus.FAILED,
    RunEvent.CANCEL_REQUESTED: RunStatus.CANCELED,
    RunEvent.MARKED_ORPHAN: RunStatus.ORPHANED,
}


class HttpAgentGateway:
    """Outbound calls to agents; swapped for a fake in unit tests."""

    def __init__(self, timeout_s: float = 5.0):
        self._client = httpx.Client(timeout=timeout_s)

    def _url(self, client: ClientRow, path: str) -> str:
        return f"http://{client.host}:{client.port}{path}"

    def ping(self, client: ClientRow) -> bool:
        try:
            return self._client.get(self._url(client, "/ping")).status_code == 200
        except httpx.HTTPError:
            return False

    def dispatch(self, client: ClientRow, envelope: dict) -> dict | None:
        """Returns the ack body, or None when the agent cannot be reached."""
        try:
            resp = self._client.post(self._url(client, "/runs"), json=envelope)
        except httpx.HTTPError:
            return None
        if resp.status_code != 200:
            return None
        return resp.json()

    def poll_run(self, client: ClientRow, run_id: int) -> dict | None:
        """{known: bool, ...} or None when unreachable."""
        try:
            resp = self._client.get(self._url(client, f"/runs/{run_id}"))
        except httpx.HTTPError:
            return None
        if resp.status_code == 404:
            return {"known": False}
        if resp.status_code != 200:
            return None
        body = resp.json()
        body.setdefault("known", True)
        return body

    def close(self) -> None:
        self._client.close()


class Manager:
    def __init__(
        self,
        config: ManagerConfig,
        repo: Repository,
        gateway: HttpAgentGateway | None = None,
        clock: Callable[[], float] = time.time,
        observer: Callable[[dict], None] | None = None,
        host_probe: Callable[[ClientRow], bool] | None = None,
        restart_hook: Callable[[ClientRow], None] | None = None,
    ):
        self.config = config
        self.repo = repo
        self.gateway = gateway or HttpAgentGateway(config.agent_call_timeout_s)
        self.clock = clock
        self._observer = observer
        self.host_probe = host_probe
        self.restart_hook = restart_hook

    def close(self) -> None:
        self.gateway.close()

    def _emit(self, kind: str, **fields) -> None:
        if self._observer is not None:
            self._observer({"kind": kind, "ts": self.clock(), **fields})

    # -- auth --------------------------------------------------------------

    def authenticate(self, token: str | None) -> TokenInfo:
        info = self.config.tokens.get(token or "")
        if info is None:
            raise Forbidden("invalid token")
        return info

    # -- clients and rooms ---------------------------------------------------

    def register_client(
        self,
        agent_key: str,
        host: str,
        port: int,
        has_gpu: bool,
        cores: int,
        ram_mb: int,
        config: ClientConfig,
    ) -> int:
        client_id = self.repo.upsert_client(
            agent_key, host, port, has_gpu, cores, ram_mb, config
        )
        self._emit("client_registered", client_id=client_id, agent_key=agent_key)
        return client_id

    def heartbeat(
        self, client_id: int, snapshot: ResourceSnapshot, accepting_new: bool
    ) -> None:
        self.repo.record_heartbeat(client_id, snapshot, accepting_new, self.clock())
        self._emit(
            "heartbeat",
            client_id=client_id,
            cpu_pct=snapshot.cpu_pct,
            accepting_new=accepting_new,
            interactive_user=snapshot.interactive_user_present,
        )

    def client_view(self, row: ClientRow) -> dict:
        room_id = self.repo.room_of_client(row.client_id)
        return {
            "client_id": row.client_id,
            "address": f"{row.host}:{row.port}",
            "room_id": room_id,
            "has_gpu": row.has_gpu,
            "cores": row.cores,
            "ram_mb": row.ram_mb,
            "availability": row.availability.value,
            "accepting_new": row.accepting_new,
            "snapshot": {
                "cpu_pct": row.snapshot.cpu_pct,
                "ram_pct": row.snapshot.ram_pct,
                "gpu_ram_pct": row.snapshot.gpu_ram_pct,
                "interactive_user_present": row.snapshot.interactive_user_present,
                "taken_at": row.snapshot.taken_at,
            },
            "active_runs": self.repo.active_run_count(row.client_id),
            "max_concurrent_runs": row.config.max_concurrent_runs,
            "last_seen": row.last_seen,
        }

    def list_clients(self) -> list[dict]:
        return [self.client_view(row) for row in self.repo.list_clients()]

    def create_room(
        self, caller: TokenInfo, name: str, visibility: str = "public",
        member_users: list[str] | None = None,
    ) -> int:
        return self.repo.create_room(
            name, caller.user, Visibility(visibility), set(member_users or []),
        )

    def assign_client_to_room(
        self, caller: TokenInfo, client_id: int, room_id: int
    ) -> None:
        self.repo.get_client(client_id)
        destination = self.repo.get_room(room_id)
        current_id = self.repo.room_of_client(client_id)
        if not caller.admin:
            # A fresh client is visible only to the administrator; owners may
            # only shuffle clients between rooms they own.
            if current_id is None:
                raise Forbidden("only an administrator may place a new client")
            source = self.repo.get_room(current_id)
            if source.owner_user != caller.user or destination.owner_user != caller.user:
                raise Forbidden("caller must own both rooms")
        self.repo.assign_client_room(client_id, room_id)
        self._emit("room_assigned", client_id=client_id, room_id=room_id)

    # -- catalog -------------------------------------------------------------

    def create_domain(self, caller: TokenInfo, name: str, build_recipe: str,
                      dependency_manifest: str, store: bool = False) -> int:
        from gridforge.model import DomainOrigin

        origin = DomainOrigin.STORE if store else DomainOrigin.USER
        approved = not store or caller.admin
        return self.repo.create_domain(
            name, build_recipe, dependency_manifest, origin, approved, caller.user
        )

    def list_domains(self, caller: TokenInfo) -> list:
        domains = self.repo.list_domains()
        return [
            d for d in domains
            if d.approved or d.owner_user == caller.user or caller.admin
        ]

    def approve_domain(self, caller: TokenInfo, domain_id: int, approved: bool) -> None:
        if not caller.admin:
            raise Forbidden("approval requires an admin token")
        self.repo.set_domain_approved(domain_id, approved)

    def serve_domain_spec(self, domain_id: int) -> dict:
        domain = self.repo.get_domain(domain_id)
        return {
            "domain_id": domain.domain_id,
            "build_recipe": domain.build_recipe,
            "dependency_manifest": domain.dependency_manifest,
            "content_hash": domain.content_hash,
        }

    def create_process(self, caller: TokenInfo, name: str, entry_command: str,
                       payload_kind: str, payload_filename: str,
                       payload: bytes) -> int:
        from gridforge.bundles import archive_names
        from gridforge.model import PayloadKind, ProcessDef

        kind = PayloadKind(payload_kind)
        if not payload:
            raise ValidationError({"payload": "payload is empty"})
        names = (
            [payload_filename] if kind == PayloadKind.SINGLE
            else archive_names(payload)
        )
        definition = ProcessDef(
            process_id=0, name=name, owner_user=caller.user,
            entry_command=entry_command, payload_kind=kind,
            payload_filename=payload_filename, payload_size=len(payload),
        )
        try:
            definition.entry_file(names)
        except ValueError as exc:
            raise ValidationError({"entry_command": str(exc)}) from exc
        return self.repo.create_process(
            name, caller.user, entry_command, kind, payload_filename, payload,
        )

    def upload_file(self, caller: TokenInfo, name: str, content: bytes) -> int:
        return self.repo.create_file(name, caller.user, content)

    def serve_shared_file(self, client_id: int, file_id: int) -> bytes:
        self.repo.get_file(file_id)
        if not self._client_references_file(client_id, file_id):
            raise Forbidden("no live run on this client references the file")
        content = self.repo.get_file_content(file_id)
        self.repo.log_transfer(client_id, file_id, self.clock())
        self._emit("transfer", client_id=client_id, file_id=file_id)
        return content

    def _client_references_file(self, client_id: int, file_id: int) -> bool:
        for run in self.repo.live_runs_on_clients():
            if run.client_id != client_id:
                continue
            request = self.repo.get_request(run.request_id)
            if file_id in request.shared_file_ids:
                return True
        return False

    # -- requests --------------------------------------------------------

    def submit_request(self, caller: TokenInfo, spec: dict) -> int:
        known_rooms = set()
        for room in self.repo.list_rooms():
            usable = (
                room.visibility == Visibility.PUBLIC
                or caller.user in room.member_users
                or room.owner_user == caller.user
                or caller.admin
            )
            if usable:
                known_rooms.add(room.room_id)
        max_slots = 0
        for row in self.repo.list_clients():
            max_slots = max(max_slots, row.config.max_concurrent_runs)
        request = validate_request(
            spec,
            known_domains={d.domain_id for d in self.repo.list_domains()},
            known_processes={p.process_id for p in self.repo.list_processes()},
            known_files={f.file_id for f in self.repo.list_files()},
            known_rooms=known_rooms,
            max_same_machine_slots=max_slots or None,
            user=caller.user,
            now=self.clock(),
        )
        with self.repo.transaction():
            request_id = self.repo.insert_request(request)
            for rank in range(request.repetitions):
                self.repo.insert_run(request_id, rank)
        self._emit(
            "request_submitted",
            request_id=request_id,
            user=caller.user,
            repetitions=request.repetitions,
            parallel=request.parallel,
            needs_gpu=request.needs_gpu,
            same_machine=request.same_machine,
            room_ids=sorted(request.room_ids),
            shared_file_ids=sorted(request.shared_file_ids),
        )
        return request_id

    def _authorize_request(self, caller: TokenInfo, request: Request) -> None:
        if request.user != caller.user and not caller.admin:
            raise Forbidden("not the request owner")

    def get_request_view(self, caller: TokenInfo, request_id: int) -> dict:
        request = self.repo.get_request(request_id)
        self._authorize_request(caller, request)
        runs = self.repo.runs_for_request(request_id)
        succeeded = sum(1 for r in runs if r.status_code == RunStatus.SUCCESS)
        return {
            "request_id": request_id,
            "user": request.user,
            "domain_id": request.domain_id,
            "process_id": request.process_id,
            "repetitions": request.repetitions,
            "parallel": request.parallel,
            "parameters": request.parameters,
            "needs_gpu": request.needs_gpu,
            "same_machine": request.same_machine,
            "shared_file_ids": sorted(request.shared_file_ids),
            "room_ids": sorted(request.room_ids),
            "status": request.status.value,
            "created_at": request.created_at,
            "progress": succeeded / request.repetitions,
            "runs": [self._run_view(r) for r in runs],
        }

    @staticmethod
    def _run_view(run: ProcessRun) -> dict:
        return {
            "run_id": run.run_id,
            "request_id": run.request_id,
            "rank": run.rank,
            "client_id": run.client_id,
            "status": int(run.status_code),
            "obs": run.obs,
            "attempt": run.attempt,
            "dispatched_at": run.dispatched_at,
            "started_at": run.started_at,
            "finished_at": run.finished_at,
            "has_bundle": run.output_bundle_ref is not None,
            "progress_pct": run.progress_pct,
            "progress_message": run.progress_message,
        }

    def list_requests(self, caller: TokenInfo) -> list[dict]:
        requests = self.repo.list_requests(None if caller.admin else caller.user)
        views = []
        for request in requests:
            succeeded = len(self.repo.succeeded_ranks(request.request_id))
            views.append({
                "request_id": request.request_id,
                "user": request.user,
                "repetitions": request.repetitions,
                "parallel": request.parallel,
                "status": request.status.value,
                "created_at": request.created_at,
                "progress": succeeded / request.repetitions,
            })
        return views

    def cancel_request(self, caller: TokenInfo, request_id: int) -> None:
        with self.repo.transaction():
            request = self.repo.get_request(request_id)
            self._authorize_request(caller, request)
            if request.status in (
                RequestStatus.COMPLETED, RequestStatus.CANCELED, RequestStatus.FAILED
            ):
                raise AlreadyTerminal(f"request {request_id} is {request.status.value}")
            self.repo.set_request_status(request_id, RequestStatus.CANCELED)
            for run in self.repo.nonterminal_runs(request_id):
                self._transition(run, RunEvent.CANCEL_REQUESTED, obs="Canceled")
                if run.client_id is not None:
                    self.repo.queue_cancellation(run.client_id, run.run_id)
        self._emit("request_status", request_id=request_id, status="canceled")

    def get_request_bundle(self, caller: TokenInfo, request_id: int) -> bytes:
        request = self.repo.get_request(request_id)
        self._authorize_request(caller, request)
        if request.status != RequestStatus.COMPLETED:
            raise NotReady(f"request {request_id} is {request.status.value}")
        archive = self.repo.get_request_archive(request_id)
        if archive is None:
            raise NotReady("archive not materialized")
        return archive

    def get_run_bundle(self, caller: TokenInfo, run_id: int) -> bytes:
        run = self.repo.get_run(run_id)
        request = self.repo.get_request(run.request_id)
        self._authorize_request(caller, request)
        stored = self.repo.get_run_bundle(run_id)
        if stored is None:
            raise NotReady(f"run {run_id} has no bundle")
        return stored[0]

    # -- run state reported by agents -------------------------------------

    def _transition(self, run: ProcessRun, event: RunEvent, obs: str | None = None,
                    **stamps) -> RunStatus:
        """Apply one state-machine step and persist + trace it."""
        next_status = run_status_transition(run.status_code, event)
        fields = {"status": int(next_status)}
        if obs is not None:
            fields["obs"] = obs
        fields.update(stamps)
        if next_status in TERMINAL_RUN_STATUSES and "finished_at" not in fields:
            fields["finished_at"] = self.clock()
        self.repo.update_run_fields(run.run_id, **fields)
        self._emit(
            "run_transition",
            run_id=run.run_id,
            request_id=run.request_id,
            rank=run.rank,
            client_id=run.client_id,
            attempt=run.attempt,
            from_status=int(run.status_code),
            to_status=int(next_status),
            event=event.value,
            obs=obs or "",
        )
        run.status_code = next_status
        return next_status

    def record_run_status(self, client_id: int, run_id: int, event: str,
                          obs: str = "") -> None:
        run_event = RunEvent(event)
        with self.repo.transaction():
            run = self.repo.get_run(run_id)
            if run.client_id != client_id:
                raise StaleAttempt(f"run {run_id} is not attributed to client {client_id}")
            target = _EVENT_TARGETS.get(run_event)
            if run.status_code == target:
                return  # repeated delivery of an already-applied event
            if run.status_code in TERMINAL_RUN_STATUSES:
                raise StaleAttempt(f"run {run_id} already terminal")
            stamps = {}
            if run_event == RunEvent.STARTED:
                stamps["started_at"] = self.clock()
            self._transition(run, run_event, obs=obs or None, **stamps)

    def record_progress(self, client_id: int, run_id: int, percent: float,
                        message: str) -> None:
        run = self.repo.get_run(run_id)
        if run.client_id != client_id or run.status_code in TERMINAL_RUN_STATUSES:
            return  # progress from superseded attempts is dropped silently
        self.repo.update_run_fields(
            run_id, progress_pct=percent, progress_message=message
        )
        self._emit("progress", run_id=run_id, percent=percent, message=message)

    def record_run_result(
        self,
        client_id: int,
        run_id: int,
        outcome: str,
        exit_code: int | None = None,
        obs: str = "",
        bundle: bytes | None = None,
        console: bytes | None = None,
    ) -> None:
        if outcome not in ("succeeded", "failed"):
            raise ValidationError({"outcome": f"unknown outcome {outcome!r}"})
        with self.repo.transaction():
            run = self.repo.get_run(run_id)
            if run.client_id != client_id:
                raise StaleAttempt(f"run {run_id} is not attributed to client {client_id}")
            if run.status_code in TERMINAL_RUN_STATUSES:
                raise StaleAttempt(f"run {run_id} already terminal")
            # Status reports may have been lost while this manager was down;
            # bridge forward so the result is never rejected for arriving first.
            if run.status_code in (
                RunStatus.DISTRIBUTED, RunStatus.BUILDING, RunStatus.WAITING_BARRIER
            ):
                self._transition(run, RunEvent.STARTED, started_at=self.clock())
            if outcome == "succeeded":
                if bundle is not None:
                    self.repo.store_run_bundle(run_id, bundle, console or b"")
                self._transition(run, RunEvent.SUCCEEDED, obs=obs or "Success")
                self._supersede_siblings(run)
                self._maybe_complete(run.request_id)
            else:
                note = obs or (f"exit {exit_code}" if exit_code is not None else "failed")
                if bundle is not None:
                    self.repo.store_run_bundle(run_id, bundle, console or b"")
                self._transition(run, RunEvent.FAILED, obs=note)
                self._redistribute_or_fail(run)

    def _supersede_siblings(self, run: ProcessRun) -> None:
        """Exactly one Success per rank: cancel other live rows of this rank."""
        for sibling in self.repo.nonterminal_runs(run.request_id):
            if sibling.rank != run.rank or sibling.run_id == run.run_id:
                continue
            self._transition(sibling, RunEvent.CANCEL_REQUESTED, obs="Superseded")
            if sibling.client_id is not None:
                self.repo.queue_cancellation(sibling.client_id, sibling.run_id)

    def _maybe_complete(self, request_id: int) -> None:
        request = self.repo.get_request(request_id)
        if request.status in (RequestStatus.CANCELED, RequestStatus.FAILED,
                              RequestStatus.COMPLETED):
            return
        succeeded = self.repo.succeeded_ranks(request_id)
        if len(succeeded) < request.repetitions:
            return
        bundles = []
        for run in self.repo.runs_for_request(request_id):
            if run.status_code != RunStatus.SUCCESS:
                continue
            stored = self.repo.get_run_bundle(run.run_id)
            archive, console = stored if stored else (b"", b"")
            bundles.append((run.rank, OutputBundle(run.run_id, archive, console)))
        self.repo.store_request_archive(request_id, aggregate_outputs(bundles))
        self.repo.set_request_status(request_id, RequestStatus.COMPLETED)
        self._emit("request_status", request_id=request_id, status="completed")

    def _redistribute_or_fail(self, run: ProcessRun) -> None:
        """A live rank lost its run: retry under the cap or fail the request."""
        request = self.repo.get_request(run.request_id)
        if request.status in (RequestStatus.CANCELED, RequestStatus.FAILED,
                              RequestStatus.COMPLETED):
            return
        if run.rank in self.repo.succeeded_ranks(run.request_id):
            return
        attempt = self.repo.max_attempt(run.request_id, run.rank)
        if attempt < self.config.retry_cap:
            new_id = self.repo.insert_run(run.request_id, run.rank, attempt + 1)
            self._emit(
                "retry_scheduled",
                run_id=new_id, request_id=run.request_id, rank=run.rank,
                attempt=attempt + 1,
            )
            return
        self.repo.set_request_status(run.request_id, RequestStatus.FAILED)
        for sibling in self.repo.nonterminal_runs(run.request_id):
            self._transition(sibling, RunEvent.CANCEL_REQUESTED, obs="RetryCapExhausted")
            if sibling.client_id is not None:
                self.repo.queue_cancellation(sibling.client_id, sibling.run_id)
        self._emit("request_status", request_id=run.request_id, status="failed")

    # -- cancellation notices ---------------------------------------------

    def poll_cancellations(self, client_id: int) -> list[dict]:
        return [
            {"notice_id": notice_id, "run_id": run_id}
            for notice_id, run_id in self.repo.pending_cancellations(client_id)
        ]

    def ack_cancellations(self, client_id: int, notice_ids: list[int]) -> None:
        self.repo.mark_cancellations_delivered(notice_ids)

    # -- barrier ------------------------------------------------------------

    def barrier_poll(self, request_id: int) -> dict:
        request = self.repo.get_request(request_id)
        if not request.parallel:
            raise NotParallel(f"request {request_id} is not parallel")
        entry = self.repo.get_rendezvous(request_id)
        if entry and entry[2]:
            return {"release": True, "master_addr": entry[0], "master_port": entry[1]}
        dispatched = self.repo.dispatched_once_ranks(request_id)
        if entry and len(dispatched) >= request.repetitions:
            self.repo.mark_barrier_released(request_id)
            self._emit(
                "barrier_release",
                request_id=request_id, master_addr=entry[0], master_port=entry[1],
            )
            return {"release": True, "master_addr": entry[0], "master_port": entry[1]}
        return {"release": False}

    # -- scheduler (Request Monitor) ----------------------------------------

    def _dispatch_candidates(self) -> list[dict]:
        """Clients eligible for new work, with room + load context attached."""
        candidates = []
        for row in self.repo.list_clients():
            if row.availability != Availability.AVAILABLE or not row.accepting_new:
                continue
            room_id = self.repo.room_of_client(row.client_id)
            if room_id is None:
                continue  # unplaced clients are visible only to the admin
            load = self.repo.active_run_count(row.client_id)
            spare = row.config.max_concurrent_runs - load
            if spare <= 0:
                continue
            candidates.append({
                "row": row, "room_id": room_id, "load": load, "spare": spare,
            })
        return candidates

    @staticmethod
    def _filter_for_request(request: Request, candidates: list[dict]) -> list[dict]:
        chosen = []
        for cand in candidates:
            if cand["room_id"] not in request.room_ids:
                continue
            if request.needs_gpu and not cand["row"].has_gpu:
                continue
            if cand["spare"] <= 0:
                continue
            chosen.append(cand)
        return chosen

    @staticmethod
    def select_clients(request: Request, candidates: list[dict],
                       ranks: list[int],
                       pin_client_id: int | None = None) -> list[tuple[int, dict]]:
        """Greedy min-effective-load placement; ids break ties.

        Returns (rank, candidate) pairs; a partial or empty plan is valid and
        simply leaves the unassigned ranks Pending for a later pass.
        """
        eligible = Manager._filter_for_request(request, candidates)
        if not eligible:
            return []
        if request.same_machine:
            fitting = [c for c in eligible if c["spare"] >= len(ranks)]
            if pin_client_id is not None:
                fitting = [
                    c for c in fitting if c["row"].client_id == pin_client_id
                ]
            if not fitting:
                return []
            best = min(fitting, key=lambda c: (c["load"], c["row"].client_id))
            return [(rank, best) for rank in ranks]
        plan: list[tuple[int, dict]] = []
        assigned: dict[int, int] = {}
        for rank in ranks:
            open_slots = [
                c for c in eligible
                if c["spare"] - assigned.get(c["row"].client_id, 0) > 0
            ]
            if not open_slots:
                break
            best = min(
                open_slots,
                key=lambda c: (
                    c["load"] + assigned.get(c["row"].client_id, 0),
                    c["row"].client_id,
                ),
            )
            plan.append((rank, best))
            assigned[best["row"].client_id] = assigned.get(best["row"].client_id, 0) + 1
        return plan

    def _same_machine_pin(self, request_id: int) -> int | None:
        """Client already hosting live or succeeded ranks of the request.

        A same-machine request must keep every rank on one host, so new
        dispatches are constrained to that client until all of its claims are
        released (failed/canceled/orphaned ranks release theirs).
        """
        pinning = (RunStatus.DISTRIBUTED, RunStatus.BUILDING,
                   RunStatus.WAITING_BARRIER, RunStatus.RUNNING,
                   RunStatus.SUCCESS)
        for run in self.repo.runs_for_request(request_id):
            if run.client_id is not None and run.status_code in pinning:
                return run.client_id
        return None

    def scheduler_tick(self) -> list[int]:
        """One pass: retries first, then every user's queue head."""
        dispatched: list[int] = []
        candidates = self._dispatch_candidates()

        retry_runs = [r for r in self.repo.pending_runs() if r.attempt > 1]
        for run in retry_runs:
            request = self.repo.get_request(run.request_id)
            if request.status in (RequestStatus.CANCELED, RequestStatus.FAILED,
                                  RequestStatus.COMPLETED):
                continue
            pin = (self._same_machine_pin(request.request_id)
                   if request.same_machine else None)
            plan = self.select_clients(request, candidates, [run.rank], pin)
            if plan:
                if self._dispatch_run(request, run, plan[0][1]):
                    dispatched.append(run.run_id)

        queues: dict[str, list[Request]] = {}
        for request in self.repo.queued_requests():
            queues.setdefault(request.user, []).append(request)
        heads = sorted(
            (reqs[0] for reqs in queues.values()), key=lambda r: r.request_id
        )
        for request in heads:
            fresh = [
                r for r in self.repo.runs_for_request(request.request_id)
                if r.status_code == RunStatus.PENDING and r.attempt == 1
                and r.dispatched_at is None
            ]
            if not fresh:
                continue
            pin = (self._same_machine_pin(request.request_id)
                   if request.same_machine else None)
            plan = self.select_clients(
                request, candidates, [r.rank for r in fresh], pin
            )
            by_rank = {r.rank: r for r in fresh}
            for rank, cand in plan:
                if self._dispatch_run(request, by_rank[rank], cand):
                    dispatched.append(by_rank[rank].run_id)
            self._refresh_queue_position(request.request_id)
        return dispatched

    def _refresh_queue_position(self, request_id: int) -> None:
        request = self.repo.get_request(request_id)
        if request.status not in (RequestStatus.QUEUED, RequestStatus.DISPATCHING):
            return
        dispatched = self.repo.dispatched_once_ranks(request_id)
        if len(dispatched) >= request.repetitions:
            self.repo.set_request_status(request_id, RequestStatus.RUNNING)
        elif dispatched:
            self.repo.set_request_status(request_id, RequestStatus.DISPATCHING)

    def _dispatch_run(self, request: Request, run: ProcessRun, cand: dict) -> bool:
        client: ClientRow = cand["row"]
        process = self.repo.get_process(request.process_id)
        domain = self.repo.get_domain(request.domain_id)
        entry = self.repo.get_rendezvous(request.request_id)
        envelope = {
            "run_id": run.run_id,
            "request_id": request.request_id,
            "rank": run.rank,
            "attempt": run.attempt,
            "repetitions": request.repetitions,
            "parallel": request.parallel,
            "parameters": request.parameters,
            "domain_id": domain.domain_id,
            "domain_hash": domain.content_hash,
            "process_id": process.process_id,
            "process_name": process.name,
            "entry_command": process.entry_command,
            "payload_kind": process.payload_kind.value,
            "payload_filename": process.payload_filename,
            "shared_files": [
                {"file_id": f.file_id, "name": f.name, "content_hash": f.content_hash}
                for f in (self.repo.get_file(fid) for fid in sorted(request.shared_file_ids))
            ],
            "master_addr": entry[0] if (request.parallel and entry) else "127.0.0.1",
            "master_port": entry[1] if (request.parallel and entry) else 0,
        }
        self._emit(
            "dispatch",
            run_id=run.run_id, request_id=request.request_id, rank=run.rank,
            client_id=client.client_id, attempt=run.attempt,
        )
        ack = self.gateway.dispatch(client, envelope)
        if not ack or not ack.get("accepted"):
            reason = (ack or {}).get("reason", "unreachable")
            self._emit(
                "dispatch_refused",
                run_id=run.run_id, client_id=client.client_id, reason=reason,
            )
            self.repo.update_run_fields(run.run_id, obs=f"dispatch refused: {reason}")
            return False
        with self.repo.transaction():
            current = self.repo.get_run(run.run_id)
            if current.status_code != RunStatus.PENDING:
                return False  # canceled while the ack was in flight
            self.repo.update_run_fields(run.run_id, client_id=client.client_id)
            current.client_id = client.client_id
            self._transition(
                current, RunEvent.DISPATCHED, dispatched_at=self.clock()
            )
            if request.parallel and run.rank == 0 and ack.get("rendezvous_port"):
                self.repo.set_rendezvous(
                    request.request_id, client.host, int(ack["rendezvous_port"])
                )
        cand["load"] += 1
        cand["spare"] -= 1
        self._emit(
            "ack",
            run_id=run.run_id, client_id=client.client_id, accepted=True,
            rendezvous_port=ack.get("rendezvous_port"),
        )
        return True

    # -- liveness (Client Monitor) --------------------------------------------

    def liveness_tick(self) -> list[dict]:
        changes = []
        for row in self.repo.list_clients():
            if row.availability == Availability.DISABLED:
                continue
            if self.gateway.ping(row):
                self.repo.set_missed_pings(row.client_id, 0)
                if row.availability == Availability.UNREACHABLE:
                    self.repo.set_availability(row.client_id, Availability.AVAILABLE)
                    changes.append({"client_id": row.client_id, "now": "available"})
                    self._emit("client_recovered", client_id=row.client_id)
                continue
            missed = row.missed_pings + 1
            self.repo.set_missed_pings(row.client_id, missed)
            self._emit("ping_missed", client_id=row.client_id, missed=missed)
            if (
                missed == 1
                and row.config.allow_remote_restart
                and self.host_probe is not None
                and self.restart_hook is not None
                and self.host_probe(row)
            ):
                # The machine answers but the agent API does not: try a restart.
                self._emit("client_restart_attempt", client_id=row.client_id)
                self.restart_hook(row)
            if (
                missed >= self.config.missed_ping_threshold
                and row.availability != Availability.UNREACHABLE
            ):
                self.repo.set_availability(row.client_id, Availability.UNREACHABLE)
                changes.append({"client_id": row.client_id, "now": "unreachable"})
                self._emit("client_unreachable", client_id=row.client_id)
        return changes

    # -- supervision (Process Run Monitor) -------------------------------------

    def supervision_tick(self) -> list[int]:
        """Poll every placed, non-terminal run; recover the unanswerable ones."""
        reassigned = []
        for run in self.repo.live_runs_on_clients():
            request = self.repo.get_request(run.request_id)
            if request.status in (RequestStatus.CANCELED, RequestStatus.FAILED,
                                  RequestStatus.COMPLETED):
                continue
            client = self.repo.get_client(run.client_id)
            orphan = False
            lost = False
            if client.availability == Availability.UNREACHABLE:
                lost = True
            else:
                answer = self.gateway.poll_run(client, run.run_id)
                if answer is None:
                    lost = True
                elif not answer.get("known", False):
                    orphan = True
            if not lost and not orphan:
                continue
            with self.repo.transaction():
                current = self.repo.get_run(run.run_id)
                if current.status_code in TERMINAL_RUN_STATUSES:
                    continue
                if orphan:
                    self._transition(current, RunEvent.MARKED_ORPHAN, obs="Orphaned")
                else:
                    self._transition(current, RunEvent.CANCEL_REQUESTED, obs="Canceled")
                self.repo.queue_cancellation(run.client_id, run.run_id)
                self._redistribute_or_fail(current)
            reassigned.append(run.run_id)
        return reassigned
