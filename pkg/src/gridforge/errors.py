"""Exception types shared across the manager, agent, executor, and CLI."""

from __future__ import annotations


class GridForgeError(Exception):
    """Base class for all gridforge errors."""


class IllegalTransition(GridForgeError):
    def __init__(self, current, event):
        super().__init__(f"no transition from {current!r} on {event!r}")
        self.current = current
        self.event = event


class ValidationError(GridForgeError):
    """Request (or other form) rejected; `fields` maps field name -> reason."""

    def __init__(self, fields: dict[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(fields.items())))
        self.fields = fields


class DuplicateRank(GridForgeError):
    def __init__(self, rank: int):
        super().__init__(f"two bundles share rank {rank}")
        self.rank = rank


class Forbidden(GridForgeError):
    pass


class AlreadyTerminal(GridForgeError):
    pass


class StaleAttempt(GridForgeError):
    """Result posted for a superseded or already-settled run; it is discarded."""


class NotReady(GridForgeError):
    pass


class NotParallel(GridForgeError):
    pass


class UnknownEntity(GridForgeError):
    """Lookup by id failed. `kind` names the registry that missed."""

    def __init__(self, kind: str, key):
        super().__init__(f"unknown {kind}: {key!r}")
        self.kind = kind
        self.key = key


class UnknownClient(UnknownEntity):
    def __init__(self, key):
        super().__init__("client", key)


class UnknownRoom(UnknownEntity):
    def __init__(self, key):
        super().__init__("room", key)


class UnknownDomain(UnknownEntity):
    def __init__(self, key):
        super().__init__("domain", key)


class UnknownProcess(UnknownEntity):
    def __init__(self, key):
        super().__init__("process", key)


class UnknownFile(UnknownEntity):
    def __init__(self, key):
        super().__init__("file", key)


class UnknownRequest(UnknownEntity):
    def __init__(self, key):
        super().__init__("request", key)


class UnknownRun(UnknownEntity):
    def __init__(self, key):
        super().__init__("run", key)


class UnknownHandle(UnknownEntity):
    def __init__(self, key):
        super().__init__("exec handle", key)


class UnknownProperty(UnknownEntity):
    def __init__(self, key):
        super().__init__("trace property", key)


class BuildFailed(GridForgeError):
    def __init__(self, message: str, log: str = ""):
        super().__init__(message)
        self.log = log


class StartFailed(GridForgeError):
    pass


class FetchFailed(GridForgeError):
    pass


class SpawnFailed(GridForgeError):
    pass


class ScenarioTimeout(GridForgeError):
    """A harness scenario did not reach quiescence; carries the partial trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
