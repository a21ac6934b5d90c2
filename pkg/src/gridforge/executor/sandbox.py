"""Hermetic subprocess sandbox backend.

An "image" is a prepared directory: a bin/ of interpreter symlinks selected
by the recipe, plus whatever the dependency manifest's prep commands leave
behind. Executions run as detached process groups with their console tee'd
to output_dir/output.txt; kill terminates the whole group with a soft grace
period. When running as root the child drops to an unprivileged uid so the
read-only bit on staged shared files actually binds.
"""

from __future__ import annotations

import os
import resource
import shlex
import shutil
import subprocess
import sys
import threading
import time
import uuid

from gridforge.errors import BuildFailed, StartFailed
from gridforge.executor.base import ExecHandle, ExecPhase, ExecSpec, ExecutorBackend
from gridforge.model import domain_content_hash

# Interpreters the recipe may select with a "base:" line.
_BASES = {
    "python3": lambda: sys.executable,
    "sh": lambda: "/bin/sh",
    "bash": lambda: shutil.which("bash") or "/bin/bash",
}

_UNPRIVILEGED_UID = 65534  # nobody
_UNPRIVILEGED_GID = 65534


def _nice_level(cpu_share_pct: float) -> int:
    # 100% -> 0 (no penalty), 10% -> 17; a soft cpu cap via scheduler priority.
    return min(19, max(0, int(round((100.0 - cpu_share_pct) * 19.0 / 100.0))))


class SandboxExecutor(ExecutorBackend):
    containerized = False

    def __init__(
        self,
        root_dir: str,
        grace_period_s: float = 5.0,
        drop_privileges: bool | None = None,
        build_timeout_s: float = 120.0,
    ):
        super().__init__()
        self.root_dir = os.path.abspath(root_dir)
        self.images_dir = os.path.join(self.root_dir, "images")
        os.makedirs(self.images_dir, exist_ok=True)
        self.grace_period_s = grace_period_s
        self.build_timeout_s = build_timeout_s
        if drop_privileges is None:
            drop_privileges = os.geteuid() == 0
        self.drop_privileges = drop_privileges
        if self.drop_privileges:
            # The unprivileged child must be able to traverse to its image.
            os.chmod(self.root_dir, 0o755)
            os.chmod(self.images_dir, 0o755)
        self._procs: dict[str, subprocess.Popen] = {}
        self._build_lock = threading.Lock()

    # -- build -----------------------------------------------------------

    def image_path(self, image_ref: str) -> str:
        return os.path.join(self.images_dir, image_ref)

    def has_image(self, recipe: str, manifest: str) -> bool:
        image_ref = domain_content_hash(recipe, manifest)
        return os.path.exists(os.path.join(self.image_path(image_ref), ".complete"))

    def build(self, recipe: str, manifest: str) -> str:
        image_ref = domain_content_hash(recipe, manifest)
        image_dir = self.image_path(image_ref)
        marker = os.path.join(image_dir, ".complete")
        with self._build_lock:
            if os.path.exists(marker):
                return image_ref
            staging = image_dir + ".building"
            shutil.rmtree(staging, ignore_errors=True)
            bin_dir = os.path.join(staging, "bin")
            os.makedirs(bin_dir)
            try:
                self._link_bases(recipe, bin_dir)
                log = self._run_manifest(manifest, staging, bin_dir)
            except BuildFailed:
                shutil.rmtree(staging, ignore_errors=True)
                raise
            with open(os.path.join(staging, "build.log"), "w") as fh:
                fh.write(log)
            with open(os.path.join(staging, ".complete"), "w") as fh:
                fh.write(image_ref)
            if self.drop_privileges:
                _make_world_readable(staging)
            shutil.rmtree(image_dir, ignore_errors=True)
            os.rename(staging, image_dir)
            return image_ref

    def _link_bases(self, recipe: str, bin_dir: str) -> None:
        saw_base = False
        for raw in recipe.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not line.startswith("base:"):
                raise BuildFailed(f"unrecognized recipe directive: {line!r}", log=line)
            name = line.split(":", 1)[1].strip()
            target = _BASES.get(name, lambda: None)()
            if not target or not os.path.exists(target):
                raise BuildFailed(f"unknown base environment: {name!r}", log=line)
            os.symlink(target, os.path.join(bin_dir, name))
            saw_base = True
        if not saw_base:
            os.symlink(_BASES["python3"](), os.path.join(bin_dir, "python3"))

    def _run_manifest(self, manifest: str, cwd: str, bin_dir: str) -> str:
        env = dict(os.environ, PATH=bin_dir + os.pathsep + os.environ.get("PATH", ""))
        chunks = []
        for raw in manifest.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            proc = subprocess.run(
                line, shell=True, cwd=cwd, env=env,
                stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                timeout=self.build_timeout_s,
            )
            output = proc.stdout.decode("utf-8", "replace")
            chunks.append(f"$ {line}\n{output}")
            if proc.returncode != 0:
                raise BuildFailed(
                    f"prep command failed ({proc.returncode}): {line}",
                    log="".join(chunks),
                )
        return "".join(chunks)

    # -- start / kill ----------------------------------------------------

    def start(self, spec: ExecSpec) -> ExecHandle:
        for role, path in spec.mounts().items():
            if not os.path.isdir(path):
                raise StartFailed(f"{role} missing: {path}")
        image_dir = self.image_path(spec.image_ref)
        if not os.path.exists(os.path.join(image_dir, ".complete")):
            raise StartFailed(f"image not built: {spec.image_ref}")
        bin_dir = os.path.join(image_dir, "bin")

        argv = shlex.split(spec.entry_command) + list(spec.argv)
        env = dict(os.environ)
        env.update({
            "PATH": bin_dir + os.pathsep + env.get("PATH", ""),
            "HOME": spec.app_dir,
            "GF_APP_DIR": spec.app_dir,
            "GF_CHECKPOINT_DIR": spec.checkpoint_dir,
            "GF_OUTPUT_DIR": spec.output_dir,
            "GF_CPU_SHARE": str(spec.limits.cpu_share_pct),
        })
        if spec.rendezvous_port is not None:
            env["GF_RENDEZVOUS_PORT"] = str(spec.rendezvous_port)
        env.update(dict(spec.env))

        if self.drop_privileges:
            for path in spec.mounts().values():
                os.chmod(path, 0o777)

        console = open(os.path.join(spec.output_dir, "output.txt"), "ab")
        handle = ExecHandle(handle_id=uuid.uuid4().hex, started_at=time.time())
        preexec = self._preexec(spec)
        try:
            proc = subprocess.Popen(
                argv,
                cwd=spec.app_dir,
                env=env,
                stdin=subprocess.DEVNULL,
                stdout=console,
                stderr=subprocess.STDOUT,
                preexec_fn=preexec,
            )
        except OSError as exc:
            raise StartFailed(f"spawn failed: {exc}") from exc
        finally:
            console.close()

        handle.phase = ExecPhase.RUNNING
        with self._lock:
            self._handles[handle.handle_id] = handle
            self._procs[handle.handle_id] = proc
        threading.Thread(
            target=self._reap, args=(handle.handle_id, proc), daemon=True
        ).start()
        return handle.snapshot()

    def _preexec(self, spec: ExecSpec):
        nice = _nice_level(spec.limits.cpu_share_pct)
        memory_mb = spec.limits.memory_mb
        drop = self.drop_privileges

        def setup():
            os.setsid()
            if nice:
                os.nice(nice)
            if memory_mb:
                # Caps heap growth; address-space limits would starve the
                # interpreter's own mappings.
                limit = memory_mb * 1024 * 1024
                resource.setrlimit(resource.RLIMIT_DATA, (limit, limit))
            if drop:
                os.setgid(_UNPRIVILEGED_GID)
                os.setuid(_UNPRIVILEGED_UID)

        return setup

    def _reap(self, handle_id: str, proc: subprocess.Popen) -> None:
        code = proc.wait()
        with self._lock:
            handle = self._handles[handle_id]
            if not handle.terminal:
                handle.phase = ExecPhase.EXITED
                handle.exit_code = code
            if handle.finished_at is None:
                handle.finished_at = time.time()

    def kill(self, handle_id: str) -> ExecHandle:
        with self._lock:
            handle = self._get(handle_id)
            if handle.terminal:
                return handle.snapshot()
            handle.phase = ExecPhase.KILLED
            proc = self._procs[handle_id]
        _terminate_group(proc, self.grace_period_s)
        with self._lock:
            if handle.finished_at is None:
                handle.finished_at = time.time()
            return handle.snapshot()


def _terminate_group(proc: subprocess.Popen, grace_s: float) -> None:
    def signal_group(sig: int) -> None:
        try:
            os.killpg(proc.pid, sig)
        except ProcessLookupError:
            pass

    import signal

    signal_group(signal.SIGTERM)
    deadline = time.monotonic() + grace_s
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            return
        time.sleep(0.02)
    signal_group(signal.SIGKILL)
    proc.wait()


def _make_world_readable(path: str) -> None:
    os.chmod(path, 0o755)
    for dirpath, dirnames, filenames in os.walk(path):
        for d in dirnames:
            os.chmod(os.path.join(dirpath, d), 0o755)
        for f in filenames:
            full = os.path.join(dirpath, f)
            if not os.path.islink(full):
                mode = 0o755 if os.access(full, os.X_OK) else 0o644
                os.chmod(full, mode)
