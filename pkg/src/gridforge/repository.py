"""Relational store behind the manager.

One sqlite file owns all durable state: clients, rooms, domains, processes,
shared files, requests, runs, rendezvous entries, file-transfer log, and
queued cancellation notices. Every mutation runs under one process-wide
reentrant lock plus a sqlite transaction, so concurrent monitor threads and
API handlers see serialized state.

The repository is deliberately dumb: it moves rows, computes nothing about
scheduling or state machines. Business rules live in manager.core.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import sqlite3
import threading

from gridforge.errors import (
    UnknownClient,
    UnknownDomain,
    UnknownFile,
    UnknownProcess,
    UnknownRequest,
    UnknownRoom,
    UnknownRun,
)
from gridforge.model import (
    Availability,
    ClientConfig,
    Domain,
    DomainOrigin,
    PayloadKind,
    ProcessDef,
    ProcessRun,
    Request,
    RequestStatus,
    ResourceSnapshot,
    Room,
    RunStatus,
    SharedFile,
    TERMINAL_RUN_STATUSES,
    Visibility,
    domain_content_hash,
    sha256_hex,
)
from gridforge.serialization import from_wire, to_wire

_SCHEMA = """
CREATE TABLE IF NOT EXISTS clients (
    client_id    INTEGER PRIMARY KEY AUTOINCREMENT,
    agent_key    TEXT NOT NULL UNIQUE,
    host         TEXT NOT NULL,
    port         INTEGER NOT NULL,
    has_gpu      INTEGER NOT NULL DEFAULT 0,
    cores        INTEGER NOT NULL DEFAULT 1,
    ram_mb       INTEGER NOT NULL DEFAULT 1024,
    config       TEXT NOT NULL,
    snapshot     TEXT,
    availability TEXT NOT NULL DEFAULT 'available',
    accepting_new INTEGER NOT NULL DEFAULT 1,
    missed_pings INTEGER NOT NULL DEFAULT 0,
    last_seen    REAL
);
CREATE TABLE IF NOT EXISTS rooms (
    room_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    name         TEXT NOT NULL UNIQUE,
    owner_user   TEXT NOT NULL,
    visibility   TEXT NOT NULL DEFAULT 'public',
    member_users TEXT NOT NULL DEFAULT '[]'
);
CREATE TABLE IF NOT EXISTS room_members (
    client_id INTEGER PRIMARY KEY,
    room_id   INTEGER NOT NULL REFERENCES rooms(room_id)
);
CREATE TABLE IF NOT EXISTS domains (
    domain_id           INTEGER PRIMARY KEY AUTOINCREMENT,
    name                TEXT NOT NULL UNIQUE,
    build_recipe        TEXT NOT NULL,
    dependency_manifest TEXT NOT NULL,
    origin              TEXT NOT NULL DEFAULT 'user',
    approved            INTEGER NOT NULL DEFAULT 1,
    owner_user          TEXT NOT NULL DEFAULT '',
    content_hash        TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS processes (
    process_id       INTEGER PRIMARY KEY AUTOINCREMENT,
    name             TEXT NOT NULL UNIQUE,
    owner_user       TEXT NOT NULL DEFAULT '',
    entry_command    TEXT NOT NULL,
    payload_kind     TEXT NOT NULL,
    payload_filename TEXT NOT NULL DEFAULT '',
    payload          BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS shared_files (
    file_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    name         TEXT NOT NULL UNIQUE,
    size_bytes   INTEGER NOT NULL,
    content_hash TEXT NOT NULL,
    owner_user   TEXT NOT NULL DEFAULT '',
    content      BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS requests (
    request_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    user            TEXT NOT NULL,
    domain_id       INTEGER NOT NULL,
    process_id      INTEGER NOT NULL,
    repetitions     INTEGER NOT NULL,
    parallel        INTEGER NOT NULL DEFAULT 0,
    parameters      TEXT NOT NULL DEFAULT '[]',
    needs_gpu       INTEGER NOT NULL DEFAULT 0,
    same_machine    INTEGER NOT NULL DEFAULT 0,
    shared_file_ids TEXT NOT NULL DEFAULT '[]',
    room_ids        TEXT NOT NULL DEFAULT '[]',
    status          TEXT NOT NULL DEFAULT 'queued',
    created_at      REAL NOT NULL DEFAULT 0,
    archive         BLOB
);
CREATE TABLE IF NOT EXISTS runs (
    run_id        INTEGER PRIMARY KEY AUTOINCREMENT,
    request_id    INTEGER NOT NULL,
    rank          INTEGER NOT NULL,
    client_id     INTEGER,
    status        INTEGER NOT NULL DEFAULT 0,
    obs           TEXT NOT NULL DEFAULT '',
    attempt       INTEGER NOT NULL DEFAULT 1,
    dispatched_at REAL,
    started_at    REAL,
    finished_at   REAL,
    progress_pct  REAL,
    progress_message TEXT NOT NULL DEFAULT '',
    bundle        BLOB,
    console       BLOB
);
CREATE INDEX IF NOT EXISTS runs_by_request ON runs(request_id, rank);
CREATE INDEX IF NOT EXISTS runs_by_client ON runs(client_id, status);
CREATE TABLE IF NOT EXISTS rendezvous (
    request_id  INTEGER PRIMARY KEY,
    master_addr TEXT NOT NULL,
    master_port INTEGER NOT NULL,
    released    INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS transfers (
    id        INTEGER PRIMARY KEY AUTOINCREMENT,
    client_id INTEGER NOT NULL,
    file_id   INTEGER NOT NULL,
    at        REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS cancellations (
    id        INTEGER PRIMARY KEY AUTOINCREMENT,
    client_id INTEGER NOT NULL,
    run_id    INTEGER NOT NULL,
    delivered INTEGER NOT NULL DEFAULT 0
);
"""

# Client states that still count against slot capacity.
ACTIVE_RUN_STATUSES = (
    int(RunStatus.DISTRIBUTED),
    int(RunStatus.BUILDING),
    int(RunStatus.WAITING_BARRIER),
    int(RunStatus.RUNNING),
)


@dataclasses.dataclass
class ClientRow:
    """A client as persisted, including bookkeeping the public model omits."""

    client_id: int
    agent_key: str
    host: str
    port: int
    has_gpu: bool
    cores: int
    ram_mb: int
    config: ClientConfig
    snapshot: ResourceSnapshot
    availability: Availability
    accepting_new: bool
    missed_pings: int
    last_seen: float | None


def _dumps(value) -> str:
    return json.dumps(value, sort_keys=True)


class Repository:
    def __init__(self, path: str = ":memory:"):
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        # Autocommit with explicit BEGIN in transaction(); WAL tolerates a
        # reader (backup/debug) alongside the single writing process.
        self._conn.isolation_level = None
        if path != ":memory:":
            self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextlib.contextmanager
    def transaction(self):
        """Serialize a compound mutation; reentrant so helpers can nest."""
        with self._lock:
            if self._conn.in_transaction:
                yield self
                return
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                yield self
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            self._conn.execute("COMMIT")

    def _exec(self, sql: str, params=()) -> sqlite3.Cursor:
        with self._lock:
            return self._conn.execute(sql, params)

    # -- clients ---------------------------------------------------------

    def upsert_client(
        self,
        agent_key: str,
        host: str,
        port: int,
        has_gpu: bool,
        cores: int,
        ram_mb: int,
        config: ClientConfig,
    ) -> int:
        """Register or re-register an agent; the agent_key makes it idempotent."""
        with self.transaction():
            row = self._exec(
                "SELECT client_id FROM clients WHERE agent_key=?", (agent_key,)
            ).fetchone()
            cfg = _dumps(to_wire(config))
            if row:
                self._exec(
                    "UPDATE clients SET host=?, port=?, has_gpu=?, cores=?, ram_mb=?,"
                    " config=?, availability=?, missed_pings=0 WHERE client_id=?",
                    (host, port, int(has_gpu), cores, ram_mb, cfg,
                     Availability.AVAILABLE.value, row["client_id"]),
                )
                return int(row["client_id"])
            cur = self._exec(
                "INSERT INTO clients (agent_key, host, port, has_gpu, cores, ram_mb, config)"
                " VALUES (?,?,?,?,?,?,?)",
                (agent_key, host, port, int(has_gpu), cores, ram_mb, cfg),
            )
            return int(cur.lastrowid)

    def _client_row(self, row: sqlite3.Row) -> ClientRow:
        return ClientRow(
            client_id=row["client_id"],
            agent_key=row["agent_key"],
            host=row["host"],
            port=row["port"],
            has_gpu=bool(row["has_gpu"]),
            cores=row["cores"],
            ram_mb=row["ram_mb"],
            config=from_wire(ClientConfig, json.loads(row["config"])),
            snapshot=from_wire(ResourceSnapshot, json.loads(row["snapshot"]))
            if row["snapshot"] else ResourceSnapshot(),
            availability=Availability(row["availability"]),
            accepting_new=bool(row["accepting_new"]),
            missed_pings=row["missed_pings"],
            last_seen=row["last_seen"],
        )

    def get_client(self, client_id: int) -> ClientRow:
        row = self._exec("SELECT * FROM clients WHERE client_id=?", (client_id,)).fetchone()
        if not row:
            raise UnknownClient(client_id)
        return self._client_row(row)

    def list_clients(self) -> list[ClientRow]:
        rows = self._exec("SELECT * FROM clients ORDER BY client_id").fetchall()
        return [self._client_row(r) for r in rows]

    def record_heartbeat(
        self, client_id: int, snapshot: ResourceSnapshot, accepting_new: bool, now: float
    ) -> None:
        with self.transaction():
            self.get_client(client_id)
            availability = (
                Availability.AVAILABLE if accepting_new else Availability.BUSY
            )
            self._exec(
                "UPDATE clients SET snapshot=?, accepting_new=?, last_seen=?,"
                " missed_pings=0, availability=CASE WHEN availability='disabled'"
                " THEN availability ELSE ? END WHERE client_id=?",
                (_dumps(to_wire(snapshot)), int(accepting_new), now,
                 availability.value, client_id),
            )

    def set_availability(self, client_id: int, availability: Availability) -> None:
        self._exec(
            "UPDATE clients SET availability=? WHERE client_id=?",
            (availability.value, client_id),
        )

    def set_missed_pings(self, client_id: int, count: int) -> None:
        self._exec(
            "UPDATE clients SET missed_pings=? WHERE client_id=?", (count, client_id)
        )

    def active_run_count(self, client_id: int) -> int:
        marks = ",".join("?" * len(ACTIVE_RUN_STATUSES))
        row = self._exec(
            f"SELECT COUNT(*) AS n FROM runs WHERE client_id=? AND status IN ({marks})",
            (client_id, *ACTIVE_RUN_STATUSES),
        ).fetchone()
        return int(row["n"])

    # -- rooms -----------------------------------------------------------

    def create_room(
        self,
        name: str,
        owner_user: str,
        visibility: Visibility = Visibility.PUBLIC,
        member_users: set[str] | None = None,
    ) -> int:
        cur = self._exec(
            "INSERT INTO rooms (name, owner_user, visibility, member_users) VALUES (?,?,?,?)",
            (name, owner_user, visibility.value, _dumps(sorted(member_users or set()))),
        )
        return int(cur.lastrowid)

    def get_room(self, room_id: int) -> Room:
        row = self._exec("SELECT * FROM rooms WHERE room_id=?", (room_id,)).fetchone()
        if not row:
            raise UnknownRoom(room_id)
        members = self._exec(
            "SELECT client_id FROM room_members WHERE room_id=?", (room_id,)
        ).fetchall()
        return Room(
            room_id=row["room_id"],
            name=row["name"],
            owner_user=row["owner_user"],
            visibility=Visibility(row["visibility"]),
            member_users=set(json.loads(row["member_users"])),
            client_ids={m["client_id"] for m in members},
        )

    def list_rooms(self) -> list[Room]:
        ids = self._exec("SELECT room_id FROM rooms ORDER BY room_id").fetchall()
        return [self.get_room(r["room_id"]) for r in ids]

    def room_of_client(self, client_id: int) -> int | None:
        row = self._exec(
            "SELECT room_id FROM room_members WHERE client_id=?", (client_id,)
        ).fetchone()
        return row["room_id"] if row else None

    def assign_client_room(self, client_id: int, room_id: int) -> None:
        """Move the client; membership in at most one room is the PK constraint."""
        with self.transaction():
            self.get_client(client_id)
            self.get_room(room_id)
            self._exec(
                "INSERT INTO room_members (client_id, room_id) VALUES (?,?)"
                " ON CONFLICT(client_id) DO UPDATE SET room_id=excluded.room_id",
                (client_id, room_id),
            )

    # -- domains ---------------------------------------------------------

    def create_domain(
        self,
        name: str,
        build_recipe: str,
        dependency_manifest: str,
        origin: DomainOrigin = DomainOrigin.USER,
        approved: bool = True,
        owner_user: str = "",
    ) -> int:
        digest = domain_content_hash(build_recipe, dependency_manifest)
        cur = self._exec(
            "INSERT INTO domains (name, build_recipe, dependency_manifest, origin,"
            " approved, owner_user, content_hash) VALUES (?,?,?,?,?,?,?)",
            (name, build_recipe, dependency_manifest, origin.value, int(approved),
             owner_user, digest),
        )
        return int(cur.lastrowid)

    def get_domain(self, domain_id: int) -> Domain:
        row = self._exec("SELECT * FROM domains WHERE domain_id=?", (domain_id,)).fetchone()
        if not row:
            raise UnknownDomain(domain_id)
        return Domain(
            domain_id=row["domain_id"],
            name=row["name"],
            build_recipe=row["build_recipe"],
            dependency_manifest=row["dependency_manifest"],
            origin=DomainOrigin(row["origin"]),
            approved=bool(row["approved"]),
            owner_user=row["owner_user"],
            content_hash=row["content_hash"],
        )

    def list_domains(self) -> list[Domain]:
        ids = self._exec("SELECT domain_id FROM domains ORDER BY domain_id").fetchall()
        return [self.get_domain(r["domain_id"]) for r in ids]

    def set_domain_approved(self, domain_id: int, approved: bool) -> None:
        with self.transaction():
            self.get_domain(domain_id)
            self._exec(
                "UPDATE domains SET approved=? WHERE domain_id=?",
                (int(approved), domain_id),
            )

    # -- processes -------------------------------------------------------

    def create_process(
        self,
        name: str,
        owner_user: str,
        entry_command: str,
        payload_kind: PayloadKind,
        payload_filename: str,
        payload: bytes,
    ) -> int:
        cur = self._exec(
            "INSERT INTO processes (name, owner_user, entry_command, payload_kind,"
            " payload_filename, payload) VALUES (?,?,?,?,?,?)",
            (name, owner_user, entry_command, payload_kind.value, payload_filename,
             payload),
        )
        return int(cur.lastrowid)

    def get_process(self, process_id: int) -> ProcessDef:
        row = self._exec(
            "SELECT * FROM processes WHERE process_id=?", (process_id,)
        ).fetchone()
        if not row:
            raise UnknownProcess(process_id)
        return ProcessDef(
            process_id=row["process_id"],
            name=row["name"],
            owner_user=row["owner_user"],
            entry_command=row["entry_command"],
            payload_kind=PayloadKind(row["payload_kind"]),
            payload_filename=row["payload_filename"],
            payload_size=len(row["payload"]),
        )

    def get_process_payload(self, process_id: int) -> bytes:
        row = self._exec(
            "SELECT payload FROM processes WHERE process_id=?", (process_id,)
        ).fetchone()
        if not row:
            raise UnknownProcess(process_id)
        return bytes(row["payload"])

    def list_processes(self) -> list[ProcessDef]:
        ids = self._exec("SELECT process_id FROM processes ORDER BY process_id").fetchall()
        return [self.get_process(r["process_id"]) for r in ids]

    # -- shared files ----------------------------------------------------

    def create_file(self, name: str, owner_user: str, content: bytes) -> int:
        cur = self._exec(
            "INSERT INTO shared_files (name, size_bytes, content_hash, owner_user,"
            " content) VALUES (?,?,?,?,?)",
            (name, len(content), sha256_hex(content), owner_user, content),
        )
        return int(cur.lastrowid)

    def get_file(self, file_id: int) -> SharedFile:
        row = self._exec(
            "SELECT file_id, name, size_bytes, content_hash, owner_user"
            " FROM shared_files WHERE file_id=?",
            (file_id,),
        ).fetchone()
        if not row:
            raise UnknownFile(file_id)
        return SharedFile(
            file_id=row["file_id"],
            name=row["name"],
            size_bytes=row["size_bytes"],
            content_hash=row["content_hash"],
            owner_user=row["owner_user"],
        )

    def get_file_content(self, file_id: int) -> bytes:
        row = self._exec(
            "SELECT content FROM shared_files WHERE file_id=?", (file_id,)
        ).fetchone()
        if not row:
            raise UnknownFile(file_id)
        return bytes(row["content"])

    def list_files(self) -> list[SharedFile]:
        ids = self._exec("SELECT file_id FROM shared_files ORDER BY file_id").fetchall()
        return [self.get_file(r["file_id"]) for r in ids]

    # -- requests --------------------------------------------------------

    def insert_request(self, request: Request) -> int:
        cur = self._exec(
            "INSERT INTO requests (user, domain_id, process_id, repetitions, parallel,"
            " parameters, needs_gpu, same_machine, shared_file_ids, room_ids, status,"
            " created_at) VALUES (?,?,?,?,?,?,?,?,?,?,?,?)",
            (request.user, request.domain_id, request.process_id, request.repetitions,
             int(request.parallel), _dumps(request.parameters), int(request.needs_gpu),
             int(request.same_machine), _dumps(sorted(request.shared_file_ids)),
             _dumps(sorted(request.room_ids)), request.status.value, request.created_at),
        )
        return int(cur.lastrowid)

    def _request_row(self, row: sqlite3.Row) -> Request:
        return Request(
            request_id=row["request_id"],
            user=row["user"],
            domain_id=row["domain_id"],
            process_id=row["process_id"],
            repetitions=row["repetitions"],
            parallel=bool(row["parallel"]),
            parameters=json.loads(row["parameters"]),
            needs_gpu=bool(row["needs_gpu"]),
            same_machine=bool(row["same_machine"]),
            shared_file_ids=set(json.loads(row["shared_file_ids"])),
            room_ids=set(json.loads(row["room_ids"])),
            status=RequestStatus(row["status"]),
            created_at=row["created_at"],
        )

    def get_request(self, request_id: int) -> Request:
        row = self._exec(
            "SELECT * FROM requests WHERE request_id=?", (request_id,)
        ).fetchone()
        if not row:
            raise UnknownRequest(request_id)
        return self._request_row(row)

    def list_requests(self, user: str | None = None) -> list[Request]:
        if user is None:
            rows = self._exec("SELECT * FROM requests ORDER BY request_id").fetchall()
        else:
            rows = self._exec(
                "SELECT * FROM requests WHERE user=? ORDER BY request_id", (user,)
            ).fetchall()
        return [self._request_row(r) for r in rows]

    def queued_requests(self) -> list[Request]:
        """Requests still in their user queues, oldest first (FIFO per user)."""
        rows = self._exec(
            "SELECT * FROM requests WHERE status IN (?,?) ORDER BY request_id",
            (RequestStatus.QUEUED.value, RequestStatus.DISPATCHING.value),
        ).fetchall()
        return [self._request_row(r) for r in rows]

    def set_request_status(self, request_id: int, status: RequestStatus) -> None:
        self._exec(
            "UPDATE requests SET status=? WHERE request_id=?",
            (status.value, request_id),
        )

    def store_request_archive(self, request_id: int, archive: bytes) -> None:
        self._exec(
            "UPDATE requests SET archive=? WHERE request_id=?", (archive, request_id)
        )

    def get_request_archive(self, request_id: int) -> bytes | None:
        row = self._exec(
            "SELECT archive FROM requests WHERE request_id=?", (request_id,)
        ).fetchone()
        if not row:
            raise UnknownRequest(request_id)
        return bytes(row["archive"]) if row["archive"] is not None else None

    # -- runs ------------------------------------------------------------

    def insert_run(self, request_id: int, rank: int, attempt: int = 1) -> int:
        cur = self._exec(
            "INSERT INTO runs (request_id, rank, attempt) VALUES (?,?,?)",
            (request_id, rank, attempt),
        )
        return int(cur.lastrowid)

    def _run_row(self, row: sqlite3.Row) -> ProcessRun:
        return ProcessRun(
            run_id=row["run_id"],
            request_id=row["request_id"],
            rank=row["rank"],
            client_id=row["client_id"],
            status_code=RunStatus(row["status"]),
            obs=row["obs"],
            attempt=row["attempt"],
            dispatched_at=row["dispatched_at"],
            started_at=row["started_at"],
            finished_at=row["finished_at"],
            output_bundle_ref=f"runs/{row['run_id']}/bundle"
            if row["bundle"] is not None else None,
            progress_pct=row["progress_pct"],
            progress_message=row["progress_message"],
        )

    def get_run(self, run_id: int) -> ProcessRun:
        row = self._exec("SELECT * FROM runs WHERE run_id=?", (run_id,)).fetchone()
        if not row:
            raise UnknownRun(run_id)
        return self._run_row(row)

    def runs_for_request(self, request_id: int) -> list[ProcessRun]:
        rows = self._exec(
            "SELECT * FROM runs WHERE request_id=? ORDER BY run_id", (request_id,)
        ).fetchall()
        return [self._run_row(r) for r in rows]

    def update_run_fields(self, run_id: int, **cols) -> None:
        if not cols:
            return
        assignments = ", ".join(f"{name}=?" for name in cols)
        self._exec(
            f"UPDATE runs SET {assignments} WHERE run_id=?", (*cols.values(), run_id)
        )

    def pending_runs(self) -> list[ProcessRun]:
        rows = self._exec(
            "SELECT * FROM runs WHERE status=? ORDER BY run_id",
            (int(RunStatus.PENDING),),
        ).fetchall()
        return [self._run_row(r) for r in rows]

    def live_runs_on_clients(self) -> list[ProcessRun]:
        """Non-terminal runs already placed somewhere; the supervision scope."""
        marks = ",".join("?" * len(ACTIVE_RUN_STATUSES))
        rows = self._exec(
            f"SELECT * FROM runs WHERE client_id IS NOT NULL AND status IN ({marks})"
            " ORDER BY run_id",
            ACTIVE_RUN_STATUSES,
        ).fetchall()
        return [self._run_row(r) for r in rows]

    def succeeded_ranks(self, request_id: int) -> set[int]:
        rows = self._exec(
            "SELECT rank FROM runs WHERE request_id=? AND status=?",
            (request_id, int(RunStatus.SUCCESS)),
        ).fetchall()
        return {r["rank"] for r in rows}

    def dispatched_once_ranks(self, request_id: int) -> set[int]:
        rows = self._exec(
            "SELECT DISTINCT rank FROM runs WHERE request_id=? AND dispatched_at"
            " IS NOT NULL",
            (request_id,),
        ).fetchall()
        return {r["rank"] for r in rows}

    def max_attempt(self, request_id: int, rank: int) -> int:
        row = self._exec(
            "SELECT MAX(attempt) AS a FROM runs WHERE request_id=? AND rank=?",
            (request_id, rank),
        ).fetchone()
        return int(row["a"] or 0)

    def store_run_bundle(self, run_id: int, archive: bytes, console: bytes) -> None:
        self._exec(
            "UPDATE runs SET bundle=?, console=? WHERE run_id=?",
            (archive, console, run_id),
        )

    def get_run_bundle(self, run_id: int) -> tuple[bytes, bytes] | None:
        row = self._exec(
            "SELECT bundle, console FROM runs WHERE run_id=?", (run_id,)
        ).fetchone()
        if not row:
            raise UnknownRun(run_id)
        if row["bundle"] is None:
            return None
        return bytes(row["bundle"]), bytes(row["console"])

    def nonterminal_runs(self, request_id: int) -> list[ProcessRun]:
        terminal = tuple(int(s) for s in TERMINAL_RUN_STATUSES)
        marks = ",".join("?" * len(terminal))
        rows = self._exec(
            f"SELECT * FROM runs WHERE request_id=? AND status NOT IN ({marks})"
            " ORDER BY run_id",
            (request_id, *terminal),
        ).fetchall()
        return [self._run_row(r) for r in rows]

    # -- rendezvous ------------------------------------------------------

    def set_rendezvous(self, request_id: int, master_addr: str, master_port: int) -> None:
        self._exec(
            "INSERT INTO rendezvous (request_id, master_addr, master_port) VALUES (?,?,?)"
            " ON CONFLICT(request_id) DO UPDATE SET master_addr=excluded.master_addr,"
            " master_port=excluded.master_port",
            (request_id, master_addr, master_port),
        )

    def get_rendezvous(self, request_id: int) -> tuple[str, int, bool] | None:
        row = self._exec(
            "SELECT * FROM rendezvous WHERE request_id=?", (request_id,)
        ).fetchone()
        if not row:
            return None
        return row["master_addr"], row["master_port"], bool(row["released"])

    def mark_barrier_released(self, request_id: int) -> None:
        self._exec(
            "UPDATE rendezvous SET released=1 WHERE request_id=?", (request_id,)
        )

    # -- transfer log ----------------------------------------------------

    def log_transfer(self, client_id: int, file_id: int, at: float) -> None:
        self._exec(
            "INSERT INTO transfers (client_id, file_id, at) VALUES (?,?,?)",
            (client_id, file_id, at),
        )

    def transfer_counts(self) -> dict[tuple[int, int], int]:
        rows = self._exec(
            "SELECT client_id, file_id, COUNT(*) AS n FROM transfers"
            " GROUP BY client_id, file_id"
        ).fetchall()
        return {(r["client_id"], r["file_id"]): r["n"] for r in rows}

    # -- cancellation notices -------------------------------------------

    def queue_cancellation(self, client_id: int, run_id: int) -> None:
        with self.transaction():
            row = self._exec(
                "SELECT id FROM cancellations WHERE client_id=? AND run_id=?"
                " AND delivered=0",
                (client_id, run_id),
            ).fetchone()
            if not row:
                self._exec(
                    "INSERT INTO cancellations (client_id, run_id) VALUES (?,?)",
                    (client_id, run_id),
                )

    def pending_cancellations(self, client_id: int) -> list[tuple[int, int]]:
        rows = self._exec(
            "SELECT id, run_id FROM cancellations WHERE client_id=? AND delivered=0"
            " ORDER BY id",
            (client_id,),
        ).fetchall()
        return [(r["id"], r["run_id"]) for r in rows]

    def mark_cancellations_delivered(self, notice_ids: list[int]) -> None:
        with self.transaction():
            for notice_id in notice_ids:
                self._exec(
                    "UPDATE cancellations SET delivered=1 WHERE id=?", (notice_id,)
                )
