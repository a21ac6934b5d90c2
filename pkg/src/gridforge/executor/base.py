"""Backend-neutral execution contract.

A backend turns a domain's build recipe into a reusable image ref, starts
detached executions described by ExecSpec, and answers cheap status polls.
Handles move Starting -> Running -> Exited(code) | Killed and never go back.
"""

from __future__ import annotations

import abc
import dataclasses
import enum
import threading
import time


class ExecPhase(str, enum.Enum):
    STARTING = "starting"
    RUNNING = "running"
    EXITED = "exited"
    KILLED = "killed"


TERMINAL_PHASES = frozenset({ExecPhase.EXITED, ExecPhase.KILLED})


@dataclasses.dataclass(frozen=True)
class ResourceLimits:
    """Caps applied to one execution; percentages of the whole machine."""

    cpu_share_pct: float = 100.0
    memory_mb: int | None = None


@dataclasses.dataclass(frozen=True)
class ExecSpec:
    image_ref: str
    entry_command: str
    argv: tuple[str, ...]  # header flags appended verbatim to entry_command
    app_dir: str
    checkpoint_dir: str
    output_dir: str
    shared_file_paths: tuple[str, ...] = ()  # staged read-only inside app_dir
    limits: ResourceLimits = ResourceLimits()
    rendezvous_port: int | None = None
    env: tuple[tuple[str, str], ...] = ()

    def mounts(self) -> dict[str, str]:
        return {
            "app_dir": self.app_dir,
            "checkpoint_dir": self.checkpoint_dir,
            "output_dir": self.output_dir,
        }


@dataclasses.dataclass
class ExecHandle:
    handle_id: str
    phase: ExecPhase = ExecPhase.STARTING
    exit_code: int | None = None
    started_at: float = 0.0
    finished_at: float | None = None

    def snapshot(self) -> "ExecHandle":
        return dataclasses.replace(self)

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES


class ExecutorBackend(abc.ABC):
    """Thread-safe across handles; per-handle operations serialized."""

    def __init__(self):
        self._lock = threading.RLock()
        self._handles: dict[str, ExecHandle] = {}

    @abc.abstractmethod
    def build(self, recipe: str, manifest: str) -> str:
        """Produce a reusable image ref keyed by the recipe+manifest hash."""

    @abc.abstractmethod
    def has_image(self, recipe: str, manifest: str) -> bool:
        """True when build(recipe, manifest) would hit the local cache."""

    @abc.abstractmethod
    def start(self, spec: ExecSpec) -> ExecHandle:
        """Launch detached; returns promptly with a live handle."""

    @abc.abstractmethod
    def kill(self, handle_id: str) -> ExecHandle:
        """Terminate the whole process tree; idempotent on terminal handles."""

    def status(self, handle_id: str) -> ExecHandle:
        with self._lock:
            return self._get(handle_id).snapshot()

    def wait(self, handle_id: str, timeout: float | None = None) -> ExecHandle:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            snap = self.status(handle_id)
            if snap.terminal:
                return snap
            if deadline is not None and time.monotonic() >= deadline:
                return snap
            time.sleep(0.02)

    def shutdown(self) -> None:
        with self._lock:
            live = [h.handle_id for h in self._handles.values() if not h.terminal]
        for handle_id in live:
            self.kill(handle_id)

    def _get(self, handle_id: str) -> ExecHandle:
        from gridforge.errors import UnknownHandle

        handle = self._handles.get(handle_id)
        if handle is None:
            raise UnknownHandle(handle_id)
        return handle
