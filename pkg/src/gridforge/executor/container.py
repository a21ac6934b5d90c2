"""Container-runtime backend driven through the docker CLI.

The build recipe is a Dockerfile; the dependency manifest is written next to
it as requirements.txt so recipes can COPY it. Run directories are bind
mounts at fixed in-container paths, so run headers built for this backend
must use those paths (see CONTAINER_DIRS).
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import tempfile
import time
import uuid

from gridforge.errors import BuildFailed, StartFailed
from gridforge.executor.base import ExecHandle, ExecPhase, ExecSpec, ExecutorBackend
from gridforge.model import domain_content_hash

CONTAINER_DIRS = {
    "app_dir": "/gf/app",
    "checkpoint_dir": "/gf/checkpoint",
    "output_dir": "/gf/output",
}


def docker_available() -> bool:
    cli = shutil.which("docker")
    if not cli:
        return False
    probe = subprocess.run(
        [cli, "info"], stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL
    )
    return probe.returncode == 0


class ContainerExecutor(ExecutorBackend):
    containerized = True

    def __init__(self, root_dir: str, grace_period_s: float = 5.0,
                 build_timeout_s: float = 600.0):
        super().__init__()
        self.root_dir = os.path.abspath(root_dir)
        os.makedirs(self.root_dir, exist_ok=True)
        self.grace_period_s = grace_period_s
        self.build_timeout_s = build_timeout_s
        self._cli = shutil.which("docker") or "docker"
        self._containers: dict[str, str] = {}
        self._poll_cache: dict[str, tuple[float, ExecHandle]] = {}

    def build(self, recipe: str, manifest: str) -> str:
        digest = domain_content_hash(recipe, manifest)
        tag = f"gridforge:{digest[:16]}"
        if self._image_exists(tag):
            return tag
        with tempfile.TemporaryDirectory(dir=self.root_dir) as ctx:
            with open(os.path.join(ctx, "Dockerfile"), "w") as fh:
                fh.write(recipe)
            with open(os.path.join(ctx, "requirements.txt"), "w") as fh:
                fh.write(manifest)
            proc = subprocess.run(
                [self._cli, "build", "-t", tag, ctx],
                stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                timeout=self.build_timeout_s,
            )
        if proc.returncode != 0:
            raise BuildFailed(
                f"image build failed for {tag}",
                log=proc.stdout.decode("utf-8", "replace"),
            )
        return tag

    def has_image(self, recipe: str, manifest: str) -> bool:
        digest = domain_content_hash(recipe, manifest)
        return self._image_exists(f"gridforge:{digest[:16]}")

    def _image_exists(self, tag: str) -> bool:
        proc = subprocess.run(
            [self._cli, "image", "inspect", tag],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        )
        return proc.returncode == 0

    def start(self, spec: ExecSpec) -> ExecHandle:
        for role, path in spec.mounts().items():
            if not os.path.isdir(path):
                raise StartFailed(f"{role} missing: {path}")
        name = f"gf-{uuid.uuid4().hex[:12]}"
        cmd = [
            self._cli, "run", "-d", "--init", "--name", name,
            "-w", CONTAINER_DIRS["app_dir"],
            "-v", f"{spec.app_dir}:{CONTAINER_DIRS['app_dir']}",
            "-v", f"{spec.checkpoint_dir}:{CONTAINER_DIRS['checkpoint_dir']}",
            "-v", f"{spec.output_dir}:{CONTAINER_DIRS['output_dir']}",
        ]
        for host_path in spec.shared_file_paths:
            inside = f"{CONTAINER_DIRS['app_dir']}/{os.path.basename(host_path)}"
            cmd += ["-v", f"{host_path}:{inside}:ro"]
        cores = os.cpu_count() or 1
        cmd += ["--cpus", f"{max(0.1, cores * spec.limits.cpu_share_pct / 100.0):.2f}"]
        if spec.limits.memory_mb:
            cmd += ["--memory", f"{spec.limits.memory_mb}m"]
        if spec.rendezvous_port is not None:
            cmd += ["-p", f"{spec.rendezvous_port}:{spec.rendezvous_port}"]
            cmd += ["-e", f"GF_RENDEZVOUS_PORT={spec.rendezvous_port}"]
        for key, value in spec.env:
            cmd += ["-e", f"{key}={value}"]
        shell_line = " ".join(
            [spec.entry_command, *map(_shquote, spec.argv)]
        ) + f" > {CONTAINER_DIRS['output_dir']}/output.txt 2>&1"
        cmd += [spec.image_ref, "sh", "-c", shell_line]

        proc = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
        if proc.returncode != 0:
            raise StartFailed(proc.stdout.decode("utf-8", "replace"))
        handle = ExecHandle(
            handle_id=uuid.uuid4().hex, phase=ExecPhase.RUNNING,
            started_at=time.time(),
        )
        with self._lock:
            self._handles[handle.handle_id] = handle
            self._containers[handle.handle_id] = name
        return handle.snapshot()

    def status(self, handle_id: str) -> ExecHandle:
        with self._lock:
            handle = self._get(handle_id)
            if handle.terminal:
                return handle.snapshot()
            cached = self._poll_cache.get(handle_id)
            if cached and time.monotonic() - cached[0] < 0.1:
                return cached[1]
            name = self._containers[handle_id]
        inspect = subprocess.run(
            [self._cli, "inspect", "--format", "{{json .State}}", name],
            stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
        )
        with self._lock:
            handle = self._get(handle_id)
            if inspect.returncode == 0 and not handle.terminal:
                state = json.loads(inspect.stdout)
                if state.get("Status") == "exited":
                    handle.phase = ExecPhase.EXITED
                    handle.exit_code = int(state.get("ExitCode", -1))
                    handle.finished_at = time.time()
            snap = handle.snapshot()
            self._poll_cache[handle_id] = (time.monotonic(), snap)
            return snap

    def kill(self, handle_id: str) -> ExecHandle:
        with self._lock:
            handle = self._get(handle_id)
            if handle.terminal:
                return handle.snapshot()
            handle.phase = ExecPhase.KILLED
            name = self._containers[handle_id]
        subprocess.run(
            [self._cli, "stop", "-t", str(int(self.grace_period_s)), name],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        )
        with self._lock:
            if handle.finished_at is None:
                handle.finished_at = time.time()
            return handle.snapshot()

    def shutdown(self) -> None:
        super().shutdown()
        with self._lock:
            names = list(self._containers.values())
        for name in names:
            subprocess.run(
                [self._cli, "rm", "-f", name],
                stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
            )


def _shquote(token: str) -> str:
    import shlex

    return shlex.quote(token)
