"""Agent configuration: manager endpoint, capacity, thresholds, cadence."""

from __future__ import annotations

import dataclasses
import os

import yaml

from gridforge.model import ClientConfig

_STR_FIELDS = {"manager_url", "token", "agent_key", "host", "workdir_root",
               "backend"}
_INT_FIELDS = {"port", "max_concurrent_runs", "local_restart_limit",
               "memory_limit_mb", "cores", "ram_mb"}
_BOOL_FIELDS = {"allow_remote_restart", "has_gpu", "keep_workdirs"}


@dataclasses.dataclass
class AgentConfig:
    manager_url: str = "http://127.0.0.1:8040"
    token: str = ""
    agent_key: str = ""  # stable identity; defaults to host:port at startup
    host: str = "127.0.0.1"  # address the manager calls back on
    port: int = 0  # 0 picks a free port at startup
    workdir_root: str = "./gridforge-agent"
    backend: str = "sandbox"  # or "container"
    max_concurrent_runs: int = 2
    cpu_refusal_threshold_pct: float = 70.0
    interactive_allocation_pct: float = 10.0
    allow_remote_restart: bool = False
    heartbeat_interval_s: float = 2.0
    cancellation_poll_interval_s: float = 2.0
    barrier_poll_interval_s: float = 0.5
    result_retry_backoff_s: float = 1.0
    register_retry_backoff_s: float = 1.0
    manager_call_timeout_s: float = 5.0
    local_restart_limit: int = 3  # extra launches after an abnormal exit
    memory_limit_mb: int = 0  # 0 = unlimited
    has_gpu: bool = False
    cores: int = 0  # 0 = detect
    ram_mb: int = 0  # 0 = detect
    keep_workdirs: bool = False
    extra_env: dict = dataclasses.field(default_factory=dict)

    def client_config(self) -> ClientConfig:
        """The subset announced to the manager at registration."""
        return ClientConfig(
            max_concurrent_runs=self.max_concurrent_runs,
            cpu_refusal_threshold_pct=self.cpu_refusal_threshold_pct,
            interactive_allocation_pct=self.interactive_allocation_pct,
            allow_remote_restart=self.allow_remote_restart,
            heartbeat_interval_s=self.heartbeat_interval_s,
            cancellation_poll_interval_s=self.cancellation_poll_interval_s,
        )


def load_agent_config(path: str | None = None) -> AgentConfig:
    """Read YAML config; GF_AGENT_* environment variables override it."""
    raw: dict = {}
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    cfg = AgentConfig(extra_env=dict(raw.pop("extra_env", {}) or {}))
    for field in dataclasses.fields(AgentConfig):
        if field.name == "extra_env":
            continue
        env_key = f"GF_AGENT_{field.name.upper()}"
        value = os.environ.get(env_key, raw.get(field.name))
        if value is None:
            continue
        if field.name in _STR_FIELDS:
            parsed = str(value)
        elif field.name in _INT_FIELDS:
            parsed = int(value)
        elif field.name in _BOOL_FIELDS:
            parsed = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        else:
            parsed = float(value)
        setattr(cfg, field.name, parsed)
    return cfg
