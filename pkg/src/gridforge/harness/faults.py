"""Scripted fault injection for simulated clusters.

A FaultScript is an ordered list of events applied at scenario-relative
times. Targets name agents by their key in the cluster ("agent0", ...) or
"manager" for manager crash/restart events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class FaultKind(str, Enum):
    DISCONNECT = "disconnect"        # network partition: agent stays alive
    CRASH = "crash"                  # agent process dies, work is lost
    REVIVE = "revive"                # undo a disconnect or crash
    USER_LOGIN = "user_login"        # interactive user appears on the host
    USER_LOGOUT = "user_logout"
    CPU_LOAD = "cpu_load"            # background cpu pressure, percent
    MANAGER_CRASH = "manager_crash"
    MANAGER_RESTART = "manager_restart"


@dataclass(frozen=True)
class FaultEvent:
    at_s: float
    kind: FaultKind
    target: str = "manager"
    pct: float = 0.0

    def __post_init__(self):
        if self.at_s < 0:
            raise ValueError("fault time must be >= 0")
        if self.kind is FaultKind.CPU_LOAD and not 0 <= self.pct <= 100:
            raise ValueError("cpu_load pct must be in [0, 100]")


@dataclass(frozen=True)
class FaultScript:
    events: tuple[FaultEvent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.events, key=lambda e: e.at_s))
        object.__setattr__(self, "events", ordered)
        self._validate()

    def _validate(self) -> None:
        down: set[str] = set()
        manager_down = False
        for event in self.events:
            if event.kind in (FaultKind.DISCONNECT, FaultKind.CRASH):
                if event.target in down:
                    raise ValueError(
                        f"{event.target} taken down twice without a revive"
                    )
                down.add(event.target)
            elif event.kind is FaultKind.REVIVE:
                if event.target not in down:
                    raise ValueError(
                        f"revive of {event.target} without a prior "
                        "disconnect/crash"
                    )
                down.discard(event.target)
            elif event.kind is FaultKind.MANAGER_CRASH:
                if manager_down:
                    raise ValueError("manager crashed twice without a restart")
                manager_down = True
            elif event.kind is FaultKind.MANAGER_RESTART:
                if not manager_down:
                    raise ValueError("manager restart without a prior crash")
                manager_down = False

    @staticmethod
    def from_dicts(rows: list[dict]) -> "FaultScript":
        events = []
        for row in rows:
            events.append(FaultEvent(
                at_s=float(row["at_s"]),
                kind=FaultKind(row["kind"]),
                target=str(row.get("target", "manager")),
                pct=float(row.get("pct", 0.0)),
            ))
        return FaultScript(events=tuple(events))
