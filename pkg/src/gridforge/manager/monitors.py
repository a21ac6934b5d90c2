"""The manager's three periodic loops, each on its own daemon thread."""

from __future__ import annotations

import logging
import threading

log = logging.getLogger(__name__)


class PeriodicTask:
    def __init__(self, name: str, period_s: float, fn):
        self.name = name
        self.period_s = period_s
        self.fn = fn
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name=name, daemon=True)

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)

    def _loop(self) -> None:
        while not self._stop.wait(self.period_s):
            try:
                self.fn()
            except Exception:  # one bad pass must not kill the monitor
                log.exception("%s pass failed", self.name)


class Monitors:
    """Request, client, and process-run monitors bundled for lifecycle calls."""

    def __init__(self, manager):
        scheduler_p, liveness_p, supervision_p = manager.config.effective_periods()
        self.tasks = [
            PeriodicTask("request-monitor", scheduler_p, manager.scheduler_tick),
            PeriodicTask("client-monitor", liveness_p, manager.liveness_tick),
            PeriodicTask("run-monitor", supervision_p, manager.supervision_tick),
        ]

    def start(self) -> None:
        for task in self.tasks:
            task.start()

    def stop(self) -> None:
        for task in self.tasks:
            task.stop()
