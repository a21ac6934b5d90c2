"""Append-only event trace and the named invariants checked against it.

The manager emits one dict per noteworthy event (dispatch, ack, transition,
transfer, barrier release, ...). A Trace serializes those appends and lets
scenario assertions run as pure functions over the ordered log.
"""

from __future__ import annotations

import json
import threading
from typing import Callable

from gridforge.errors import UnknownProperty
from gridforge.model import RunStatus


class Trace:
    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[dict] = []

    def record(self, event: dict) -> None:
        with self._lock:
            self._events.append(dict(event, seq=len(self._events)))

    @property
    def events(self) -> list[dict]:
        with self._lock:
            return list(self._events)

    def filter(self, kind: str | None = None, **fields) -> list[dict]:
        out = []
        for event in self.events:
            if kind is not None and event.get("kind") != kind:
                continue
            if all(event.get(k) == v for k, v in fields.items()):
                out.append(event)
        return out

    def count(self, kind: str, **fields) -> int:
        return len(self.filter(kind, **fields))

    def dump(self, path: str) -> None:
        """One JSON object per line, in event order."""
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event, sort_keys=True) + "\n")


class TraceViolation(AssertionError):
    def __init__(self, prop: str, event: dict, detail: str):
        super().__init__(f"{prop}: {detail} (event seq={event.get('seq')})")
        self.prop = prop
        self.event = event


def _submissions(events: list[dict]) -> dict[int, dict]:
    return {
        e["request_id"]: e for e in events if e.get("kind") == "request_submitted"
    }


def _check_rank_uniqueness(events: list[dict], context: dict) -> dict | None:
    """At most one Success per (request, rank), ever."""
    seen: set[tuple[int, int]] = set()
    for event in events:
        if event.get("kind") != "run_transition":
            continue
        if event["to_status"] != int(RunStatus.SUCCESS):
            continue
        key = (event["request_id"], event["rank"])
        if key in seen:
            return event
        seen.add(key)
    return None


def _check_barrier_safety(events: list[dict], context: dict) -> dict | None:
    """No rank of a parallel request starts running before its release."""
    parallel = {
        rid for rid, sub in _submissions(events).items() if sub.get("parallel")
    }
    released: set[int] = set()
    for event in events:
        if event.get("kind") == "barrier_release":
            released.add(event["request_id"])
        if (
            event.get("kind") == "run_transition"
            and event["request_id"] in parallel
            and event["to_status"] == int(RunStatus.RUNNING)
            and event["request_id"] not in released
        ):
            return event
    return None


def _check_transfer_economy(events: list[dict], context: dict) -> dict | None:
    """Each (client, shared file) pair is transferred at most once."""
    seen: set[tuple[int, int]] = set()
    for event in events:
        if event.get("kind") != "transfer":
            continue
        key = (event["client_id"], event["file_id"])
        if key in seen:
            return event
        seen.add(key)
    return None


def _check_fifo_per_user(events: list[dict], context: dict) -> dict | None:
    """First-attempt dispatches of one user's requests never interleave.

    A later request of the same user may start dispatching only after the
    earlier one either had every rank accepted once or left the queue
    (canceled, failed, completed). Only accepted dispatches count; a refused
    attempt leaves the rank queued.
    """
    owner = {rid: sub["user"] for rid, sub in _submissions(events).items()}
    expected = {
        rid: sub["repetitions"] for rid, sub in _submissions(events).items()
    }
    open_request: dict[str, int] = {}  # user -> request currently dispatching
    done: set[int] = set()
    dispatched: dict[int, set[int]] = {}
    for event in events:
        if (
            event.get("kind") == "request_status"
            and event.get("status") in ("canceled", "failed", "completed")
        ):
            done.add(event["request_id"])
            continue
        if event.get("kind") != "run_transition" or event.get("event") != "dispatched":
            continue
        if event.get("attempt", 1) != 1:
            continue
        rid = event["request_id"]
        user = owner.get(rid)
        if user is None:
            continue
        current = open_request.get(user)
        if current is not None and current != rid and current not in done:
            return event
        if rid in done:
            return event
        open_request[user] = rid
        ranks = dispatched.setdefault(rid, set())
        ranks.add(event["rank"])
        if len(ranks) >= expected.get(rid, 0):
            done.add(rid)
    return None


_LIVE_OR_SUCCEEDED = {
    int(RunStatus.DISTRIBUTED), int(RunStatus.BUILDING),
    int(RunStatus.WAITING_BARRIER), int(RunStatus.RUNNING),
    int(RunStatus.SUCCESS),
}


def _check_filter_compliance(events: list[dict], context: dict) -> dict | None:
    """Dispatches respect gpu, room, and same-machine constraints.

    Needs `context["gpu_clients"]` and `context["client_rooms"]` (client_id ->
    room_id) captured from the cluster at assertion time. Same-machine checks
    that live-or-succeeded ranks of a request never span two clients; released
    claims (failed/canceled/orphaned ranks) allow redistribution elsewhere.
    """
    gpu_clients: set[int] = set(context.get("gpu_clients", set()))
    client_rooms: dict[int, int] = dict(context.get("client_rooms", {}))
    subs = _submissions(events)
    run_state: dict[int, tuple[int, int, int]] = {}  # run -> (request, client, status)
    for event in events:
        if event.get("kind") == "run_transition":
            prior = run_state.get(event["run_id"])
            client_id = event.get("client_id")
            if client_id is None and prior is not None:
                client_id = prior[1]
            if client_id is not None:
                run_state[event["run_id"]] = (
                    event["request_id"], client_id, event["to_status"]
                )
            if event.get("event") != "dispatched":
                continue
        elif event.get("kind") != "dispatch":
            continue
        sub = subs.get(event["request_id"])
        if sub is None:
            continue
        client_id = event["client_id"]
        if sub.get("needs_gpu") and client_id not in gpu_clients:
            return event
        rooms = sub.get("room_ids") or []
        if client_rooms and rooms and client_rooms.get(client_id) not in rooms:
            return event
        if sub.get("same_machine") and event.get("kind") == "run_transition":
            hosts = {
                client for (rid, client, status) in run_state.values()
                if rid == event["request_id"] and status in _LIVE_OR_SUCCEEDED
            }
            if len(hosts) > 1:
                return event
    return None


PROPERTIES: dict[str, Callable[[list[dict], dict], dict | None]] = {
    "rank-uniqueness": _check_rank_uniqueness,
    "barrier-safety": _check_barrier_safety,
    "transfer-economy": _check_transfer_economy,
    "fifo-per-user": _check_fifo_per_user,
    "filter-compliance": _check_filter_compliance,
}


def check_trace(trace: Trace | list[dict], prop: str, **context) -> dict | None:
    """Return the first violating event, or None when the property holds."""
    checker = PROPERTIES.get(prop)
    if checker is None:
        raise UnknownProperty(prop)
    events = trace.events if isinstance(trace, Trace) else list(trace)
    return checker(events, context)


def assert_trace(trace: Trace | list[dict], prop: str, **context) -> None:
    violation = check_trace(trace, prop, **context)
    if violation is not None:
        raise TraceViolation(prop, violation, "property violated")
