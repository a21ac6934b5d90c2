"""Core domain types, the run status state machine, and request validation.

Everything here is a plain value: safe to copy between threads, serialized
with the canonical field names below, and mutated only by the manager/agent
modules that own the authoritative state.
"""

from __future__ import annotations

import enum
import hashlib
import shlex
import time
from dataclasses import dataclass, field

from gridforge.errors import IllegalTransition, ValidationError


class RunStatus(enum.IntEnum):
    """Numeric status of one process run.

    Codes 3 (Success) and 5 (Canceled) are load-bearing wire values; the rest
    fill out the lifecycle and are documented here as the single source of
    truth.
    """

    PENDING = 0
    DISTRIBUTED = 1
    RUNNING = 2
    SUCCESS = 3
    FAILED = 4
    CANCELED = 5
    BUILDING = 6
    WAITING_BARRIER = 7
    ORPHANED = 8


TERMINAL_RUN_STATUSES = frozenset(
    {RunStatus.SUCCESS, RunStatus.FAILED, RunStatus.CANCELED, RunStatus.ORPHANED}
)


class RunEvent(str, enum.Enum):
    DISPATCHED = "dispatched"
    BUILD_STARTED = "build_started"
    BARRIER_WAIT = "barrier_wait"
    STARTED = "started"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    CANCEL_REQUESTED = "cancel_requested"
    MARKED_ORPHAN = "marked_orphan"


# The fixed run lifecycle. Building may be skipped on an image cache hit and
# WaitingBarrier only appears for parallel requests, so several forward edges
# coexist. CancelRequested is accepted from every non-terminal state;
# MarkedOrphan only once the run is on a client.
_TRANSITIONS: dict[tuple[RunStatus, RunEvent], RunStatus] = {
    (RunStatus.PENDING, RunEvent.DISPATCHED): RunStatus.DISTRIBUTED,
    (RunStatus.PENDING, RunEvent.CANCEL_REQUESTED): RunStatus.CANCELED,
    (RunStatus.DISTRIBUTED, RunEvent.BUILD_STARTED): RunStatus.BUILDING,
    (RunStatus.DISTRIBUTED, RunEvent.BARRIER_WAIT): RunStatus.WAITING_BARRIER,
    (RunStatus.DISTRIBUTED, RunEvent.STARTED): RunStatus.RUNNING,
    (RunStatus.DISTRIBUTED, RunEvent.FAILED): RunStatus.FAILED,
    (RunStatus.DISTRIBUTED, RunEvent.CANCEL_REQUESTED): RunStatus.CANCELED,
    (RunStatus.DISTRIBUTED, RunEvent.MARKED_ORPHAN): RunStatus.ORPHANED,
    (RunStatus.BUILDING, RunEvent.BARRIER_WAIT): RunStatus.WAITING_BARRIER,
    (RunStatus.BUILDING, RunEvent.STARTED): RunStatus.RUNNING,
    (RunStatus.BUILDING, RunEvent.FAILED): RunStatus.FAILED,
    (RunStatus.BUILDING, RunEvent.CANCEL_REQUESTED): RunStatus.CANCELED,
    (RunStatus.BUILDING, RunEvent.MARKED_ORPHAN): RunStatus.ORPHANED,
    (RunStatus.WAITING_BARRIER, RunEvent.STARTED): RunStatus.RUNNING,
    (RunStatus.WAITING_BARRIER, RunEvent.FAILED): RunStatus.FAILED,
    (RunStatus.WAITING_BARRIER, RunEvent.CANCEL_REQUESTED): RunStatus.CANCELED,
    (RunStatus.WAITING_BARRIER, RunEvent.MARKED_ORPHAN): RunStatus.ORPHANED,
    (RunStatus.RUNNING, RunEvent.SUCCEEDED): RunStatus.SUCCESS,
    (RunStatus.RUNNING, RunEvent.FAILED): RunStatus.FAILED,
    (RunStatus.RUNNING, RunEvent.CANCEL_REQUESTED): RunStatus.CANCELED,
    (RunStatus.RUNNING, RunEvent.MARKED_ORPHAN): RunStatus.ORPHANED,
}


def run_status_transition(current: RunStatus | int, event: RunEvent | str) -> RunStatus:
    """Return the successor status, or raise IllegalTransition.

    Total over the full (status, event) grid: every pair either has a defined
    successor in the table above or rejects.
    """
    current = RunStatus(current)
    event = RunEvent(event)
    try:
        return _TRANSITIONS[(current, event)]
    except KeyError:
        raise IllegalTransition(current, event) from None


class Availability(str, enum.Enum):
    AVAILABLE = "available"
    BUSY = "busy"
    UNREACHABLE = "unreachable"
    DISABLED = "disabled"


class RequestStatus(str, enum.Enum):
    QUEUED = "queued"
    DISPATCHING = "dispatching"
    RUNNING = "running"
    COMPLETED = "completed"
    CANCELED = "canceled"
    FAILED = "failed"


TERMINAL_REQUEST_STATUSES = frozenset(
    {RequestStatus.COMPLETED, RequestStatus.CANCELED, RequestStatus.FAILED}
)


class Visibility(str, enum.Enum):
    PUBLIC = "public"
    RESTRICTED = "restricted"


class DomainOrigin(str, enum.Enum):
    STORE = "store"
    USER = "user"


@dataclass
class ResourceSnapshot:
    cpu_pct: float = 0.0
    ram_pct: float = 0.0
    gpu_ram_pct: float | None = None
    interactive_user_present: bool = False
    taken_at: float = 0.0
    stale: bool = False

    def __post_init__(self):
        for name in ("cpu_pct", "ram_pct", "gpu_ram_pct"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {value}")


@dataclass
class ClientConfig:
    max_concurrent_runs: int = 2
    cpu_refusal_threshold_pct: float = 70.0
    interactive_allocation_pct: float = 10.0
    allow_remote_restart: bool = False
    heartbeat_interval_s: float = 2.0
    cancellation_poll_interval_s: float = 2.0

    def __post_init__(self):
        if not 0 < self.interactive_allocation_pct < self.cpu_refusal_threshold_pct <= 100:
            raise ValueError(
                "need 0 < interactive_allocation_pct < cpu_refusal_threshold_pct <= 100, "
                f"got {self.interactive_allocation_pct} / {self.cpu_refusal_threshold_pct}"
            )
        if self.max_concurrent_runs < 1:
            raise ValueError("max_concurrent_runs must be >= 1")


@dataclass
class ClientNode:
    client_id: int
    address: str  # "host:port"
    rooms: set[int] = field(default_factory=set)
    has_gpu: bool = False
    cores: int = 1
    ram_mb: int = 1024
    snapshot: ResourceSnapshot = field(default_factory=ResourceSnapshot)
    availability: Availability = Availability.AVAILABLE
    config: ClientConfig = field(default_factory=ClientConfig)
    active_run_count: int = 0

    @property
    def host(self) -> str:
        return self.address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.address.rsplit(":", 1)[1])

    @property
    def spare_slots(self) -> int:
        return max(0, self.config.max_concurrent_runs - self.active_run_count)


@dataclass
class Room:
    room_id: int
    name: str
    owner_user: str
    visibility: Visibility = Visibility.PUBLIC
    member_users: set[str] = field(default_factory=set)
    client_ids: set[int] = field(default_factory=set)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def domain_content_hash(build_recipe: str, dependency_manifest: str) -> str:
    """Digest of the recipe+manifest bytes; changes iff either changes."""
    h = hashlib.sha256()
    h.update(build_recipe.encode("utf-8"))
    h.update(b"\x00")
    h.update(dependency_manifest.encode("utf-8"))
    return h.hexdigest()


@dataclass
class Domain:
    domain_id: int
    name: str
    build_recipe: str
    dependency_manifest: str
    origin: DomainOrigin = DomainOrigin.USER
    approved: bool = True
    owner_user: str = ""
    content_hash: str = ""

    def __post_init__(self):
        expected = domain_content_hash(self.build_recipe, self.dependency_manifest)
        if not self.content_hash:
            self.content_hash = expected
        elif self.content_hash != expected:
            raise ValueError("content_hash does not match recipe+manifest bytes")


class PayloadKind(str, enum.Enum):
    SINGLE = "single"  # one source file
    ARCHIVE = "archive"  # zip of files


@dataclass
class ProcessDef:
    process_id: int
    name: str
    owner_user: str
    entry_command: str
    payload_kind: PayloadKind = PayloadKind.SINGLE
    payload_filename: str = ""  # for single-file payloads
    payload_size: int = 0

    def entry_file(self, payload_names: list[str]) -> str:
        """The one payload file the entry command refers to.

        Raises ValueError unless exactly one command token names a payload
        file, so a dispatched run can never reference an ambiguous or missing
        entry point.
        """
        tokens = shlex.split(self.entry_command)
        hits = [t for t in tokens if t in payload_names]
        if len(hits) != 1:
            raise ValueError(
                f"entry_command must reference exactly one payload file, found {hits!r} "
                f"among payload {payload_names!r}"
            )
        return hits[0]


@dataclass
class SharedFile:
    file_id: int
    name: str
    size_bytes: int
    content_hash: str
    owner_user: str


@dataclass
class Request:
    request_id: int
    user: str
    domain_id: int
    process_id: int
    repetitions: int
    parallel: bool = False
    parameters: list[str] = field(default_factory=list)
    needs_gpu: bool = False
    same_machine: bool = False
    shared_file_ids: set[int] = field(default_factory=set)
    room_ids: set[int] = field(default_factory=set)
    status: RequestStatus = RequestStatus.QUEUED
    created_at: float = 0.0


@dataclass
class ProcessRun:
    run_id: int
    request_id: int
    rank: int
    client_id: int | None = None
    status_code: RunStatus = RunStatus.PENDING
    obs: str = ""
    attempt: int = 1
    dispatched_at: float | None = None
    started_at: float | None = None
    finished_at: float | None = None
    output_bundle_ref: str | None = None
    progress_pct: float | None = None
    progress_message: str = ""


@dataclass
class RunHeader:
    """The eight parameters injected into every user-code invocation."""

    app_dir: str
    checkpoint_dir: str
    output_dir: str
    rank: int
    repetitions: int
    master_addr: str = "127.0.0.1"
    master_port: int = 0
    parameters: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not 0 <= self.rank < self.repetitions:
            raise ValueError(f"rank {self.rank} outside [0, {self.repetitions})")
        dirs = {self.app_dir, self.checkpoint_dir, self.output_dir}
        if len(dirs) != 3:
            raise ValueError("app_dir, checkpoint_dir, and output_dir must be distinct")
        for p in self.parameters:
            if "," in p:
                raise ValueError(f"parameter {p!r} contains a comma")


def parse_parameters(raw) -> list[str]:
    """Normalize the user's parameter field to an ordered list of strings.

    Accepts a list or a comma-separated string. Embedded commas inside an
    individual value are rejected: the comma-separated wire contract has no
    escape syntax.
    """
    if raw is None:
        return []
    if isinstance(raw, str):
        return [p for p in raw.split(",") if p != ""] if raw else []
    values = [str(p) for p in raw]
    for v in values:
        if "," in v:
            raise ValueError(f"parameter {v!r} contains a comma")
    return values


def validate_request(
    spec: dict,
    *,
    known_domains: set[int],
    known_processes: set[int],
    known_files: set[int],
    known_rooms: set[int],
    max_same_machine_slots: int | None = None,
    request_id: int = 0,
    user: str = "",
    now: float | None = None,
) -> Request:
    """Apply defaults and check every field, or reject with all violations.

    `max_same_machine_slots` is the largest per-client slot count currently
    registered; a same_machine request whose repetitions cannot ever fit on
    one client is rejected here rather than left to starve in the queue.
    """
    fields: dict[str, str] = {}

    def _int(name, default=None):
        value = spec.get(name, default)
        try:
            return int(value)
        except (TypeError, ValueError):
            fields[name] = f"not an integer: {value!r}"
            return None

    repetitions = _int("repetitions", 1)
    if repetitions is not None and repetitions < 1:
        fields["repetitions"] = f"must be >= 1, got {repetitions}"

    domain_id = _int("domain_id")
    if domain_id is not None and domain_id not in known_domains:
        fields["domain_id"] = f"unknown domain {domain_id}"
    process_id = _int("process_id")
    if process_id is not None and process_id not in known_processes:
        fields["process_id"] = f"unknown process {process_id}"

    try:
        parameters = parse_parameters(spec.get("parameters"))
    except ValueError as exc:
        fields["parameters"] = str(exc)
        parameters = []

    shared_file_ids = set()
    for fid in spec.get("shared_file_ids") or []:
        try:
            fid = int(fid)
        except (TypeError, ValueError):
            fields["shared_file_ids"] = f"not an id: {fid!r}"
            continue
        if fid not in known_files:
            fields["shared_file_ids"] = f"unknown shared file {fid}"
        shared_file_ids.add(fid)

    room_ids = set()
    for rid in spec.get("room_ids") or []:
        try:
            rid = int(rid)
        except (TypeError, ValueError):
            fields["room_ids"] = f"not an id: {rid!r}"
            continue
        if rid not in known_rooms:
            fields["room_ids"] = f"unknown room {rid}"
        room_ids.add(rid)
    if not room_ids and "room_ids" not in fields:
        fields["room_ids"] = "at least one room is required"

    parallel = bool(spec.get("parallel", False))
    needs_gpu = bool(spec.get("needs_gpu", False))
    same_machine = bool(spec.get("same_machine", False))

    if (
        same_machine
        and repetitions is not None
        and max_same_machine_slots is not None
        and repetitions > max_same_machine_slots
    ):
        fields["same_machine"] = (
            f"no client can host {repetitions} concurrent runs "
            f"(largest slot count is {max_same_machine_slots})"
        )

    if fields:
        raise ValidationError(fields)

    return Request(
        request_id=request_id,
        user=user,
        domain_id=domain_id,
        process_id=process_id,
        repetitions=repetitions,
        parallel=parallel,
        parameters=parameters,
        needs_gpu=needs_gpu,
        same_machine=same_machine,
        shared_file_ids=shared_file_ids,
        room_ids=room_ids,
        status=RequestStatus.QUEUED,
        created_at=now if now is not None else time.time(),
    )
