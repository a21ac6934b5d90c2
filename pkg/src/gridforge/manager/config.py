"""Manager configuration: listen address, tokens, monitor cadence, retry cap."""

from __future__ import annotations

import dataclasses
import os

import yaml


@dataclasses.dataclass(frozen=True)
class TokenInfo:
    user: str
    admin: bool = False
    agent: bool = False


@dataclasses.dataclass
class ManagerConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    db_path: str = "gridforge.db"
    tokens: dict = dataclasses.field(default_factory=dict)  # token -> TokenInfo
    scheduler_period_s: float = 1.0
    liveness_period_s: float = 5.0
    supervision_period_s: float = 10.0
    # Divides the three periods; lets a simulation run the control loops
    # faster without touching workload timing.
    time_compression: float = 1.0
    missed_ping_threshold: int = 3
    retry_cap: int = 5  # attempts per rank before the request fails
    agent_call_timeout_s: float = 5.0
    ui_dir: str | None = None

    def effective_periods(self) -> tuple[float, float, float]:
        c = max(self.time_compression, 1e-9)
        return (
            self.scheduler_period_s / c,
            self.liveness_period_s / c,
            self.supervision_period_s / c,
        )


def load_manager_config(path: str | None = None) -> ManagerConfig:
    """Read YAML config; environment variables override file values."""
    raw: dict = {}
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    tokens = {
        token: TokenInfo(
            user=str(info.get("user", "")),
            admin=bool(info.get("admin", False)),
            agent=bool(info.get("agent", False)),
        )
        for token, info in (raw.pop("tokens", {}) or {}).items()
    }
    cfg = ManagerConfig(tokens=tokens)
    for field in dataclasses.fields(ManagerConfig):
        if field.name == "tokens":
            continue
        env_key = f"GF_MANAGER_{field.name.upper()}"
        value = os.environ.get(env_key, raw.get(field.name))
        if value is not None:
            kind = {"host": str, "db_path": str, "ui_dir": str}.get(field.name)
            if kind is None:
                kind = int if field.name in ("port", "missed_ping_threshold", "retry_cap") else float
            setattr(cfg, field.name, kind(value))
    return cfg
