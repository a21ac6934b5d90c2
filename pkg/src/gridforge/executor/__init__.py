"""Pluggable execution backends.

`sandbox` runs user code as supervised subprocess groups inside prepared
directory images: hermetic, no daemon required, used by tests and the
simulation harness. `container` shells out to a container runtime CLI and
expects the build recipe to be a Dockerfile. Both present the same
build/start/status/kill surface.
"""

from __future__ import annotations

from gridforge.executor.base import (
    ExecHandle,
    ExecPhase,
    ExecSpec,
    ExecutorBackend,
    ResourceLimits,
)


def make_backend(name: str, root_dir: str, **kwargs) -> ExecutorBackend:
    if name == "sandbox":
        from gridforge.executor.sandbox import SandboxExecutor

        return SandboxExecutor(root_dir, **kwargs)
    if name == "container":
        from gridforge.executor.container import ContainerExecutor

        return ContainerExecutor(root_dir, **kwargs)
    raise ValueError(f"unknown executor backend: {name!r}")


__all__ = [
    "ExecHandle",
    "ExecPhase",
    "ExecSpec",
    "ExecutorBackend",
    "ResourceLimits",
    "make_backend",
]
