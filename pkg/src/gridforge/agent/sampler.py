"""Resource samplers: the real psutil probe and a scripted one for tests."""

from __future__ import annotations

import threading
import time

import psutil

from gridforge.model import ResourceSnapshot


class PsutilSampler:
    """Samples the host. Interactive-user detection is a login-session scan."""

    def __init__(self):
        psutil.cpu_percent(interval=None)  # prime the internal counter

    def sample(self) -> ResourceSnapshot:
        gpu = None  # no portable GPU probe; backends may not have one at all
        return ResourceSnapshot(
            cpu_pct=float(psutil.cpu_percent(interval=None)),
            ram_pct=float(psutil.virtual_memory().percent),
            gpu_ram_pct=gpu,
            interactive_user_present=bool(psutil.users()),
            taken_at=time.time(),
        )


class ScriptedSampler:
    """Settable snapshot source; the harness scripts load and login events."""

    def __init__(self, cpu_pct: float = 5.0, ram_pct: float = 20.0,
                 interactive_user_present: bool = False):
        self._lock = threading.Lock()
        self._cpu = cpu_pct
        self._ram = ram_pct
        self._interactive = interactive_user_present

    def set_cpu(self, pct: float) -> None:
        with self._lock:
            self._cpu = pct

    def set_interactive(self, present: bool) -> None:
        with self._lock:
            self._interactive = present

    def sample(self) -> ResourceSnapshot:
        with self._lock:
            return ResourceSnapshot(
                cpu_pct=self._cpu,
                ram_pct=self._ram,
                interactive_user_present=self._interactive,
                taken_at=time.time(),
            )
