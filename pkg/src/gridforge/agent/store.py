"""Small embedded store per agent: run registry and local cache bookkeeping.

Caches are content-addressed files on disk; this store only records what has
been fetched or built so reconnecting after a crash does not refetch them.
"""

from __future__ import annotations

import sqlite3
import threading

_SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
    run_id      INTEGER PRIMARY KEY,
    request_id  INTEGER NOT NULL,
    rank        INTEGER NOT NULL,
    attempt     INTEGER NOT NULL,
    phase       TEXT NOT NULL,
    workdir     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS file_cache (
    file_id      INTEGER PRIMARY KEY,
    path         TEXT NOT NULL,
    content_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS payload_cache (
    process_id INTEGER PRIMARY KEY,
    path       TEXT NOT NULL
);
"""


class AgentStore:
    def __init__(self, path: str = ":memory:"):
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def upsert_run(self, run_id: int, request_id: int, rank: int, attempt: int,
                   phase: str, workdir: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO runs (run_id, request_id, rank, attempt, phase, workdir)"
                " VALUES (?,?,?,?,?,?) ON CONFLICT(run_id) DO UPDATE SET phase=excluded.phase",
                (run_id, request_id, rank, attempt, phase, workdir),
            )
            self._conn.commit()

    def set_phase(self, run_id: int, phase: str) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE runs SET phase=? WHERE run_id=?", (phase, run_id)
            )
            self._conn.commit()

    def remember_file(self, file_id: int, path: str, content_hash: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO file_cache (file_id, path, content_hash)"
                " VALUES (?,?,?)",
                (file_id, path, content_hash),
            )
            self._conn.commit()

    def cached_file(self, file_id: int, content_hash: str) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT path, content_hash FROM file_cache WHERE file_id=?",
                (file_id,),
            ).fetchone()
        if row and row["content_hash"] == content_hash:
            return row["path"]
        return None

    def remember_payload(self, process_id: int, path: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO payload_cache (process_id, path) VALUES (?,?)",
                (process_id, path),
            )
            self._conn.commit()

    def cached_payload(self, process_id: int) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT path FROM payload_cache WHERE process_id=?", (process_id,)
            ).fetchone()
        return row["path"] if row else None
