"""Output bundles: per-run archives and per-request aggregation.

A bundle is the zipped image of one run's output directory; output.txt (the
captured console) is always present, even when empty. Aggregation lays each
run's files under a rank-named directory and concatenates the consoles in
ascending rank order into one merged file.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass
from pathlib import Path

from gridforge.errors import DuplicateRank

CONSOLE_NAME = "output.txt"
MERGED_CONSOLE_NAME = "merged_output.txt"


@dataclass
class OutputBundle:
    run_id: int
    archive: bytes  # zip image of the run's output_dir
    console_log: bytes  # contents of output.txt, possibly empty


def zip_dir(root: Path) -> bytes:
    """Zip a directory tree (paths relative to root, sorted for determinism)."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for path in sorted(root.rglob("*")):
            rel = path.relative_to(root).as_posix()
            if path.is_dir():
                zf.writestr(rel + "/", b"")
            else:
                zf.write(path, rel)
    return buf.getvalue()


def unzip_to(archive: bytes, dest: Path) -> list[str]:
    """Extract a zip archive into dest; returns the extracted names."""
    dest.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        zf.extractall(dest)
        return zf.namelist()


def archive_names(archive: bytes) -> list[str]:
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        return zf.namelist()


def make_bundle(run_id: int, output_dir: Path) -> OutputBundle:
    """Bundle a run's output directory; creates an empty console if missing."""
    console_path = output_dir / CONSOLE_NAME
    if not console_path.exists():
        console_path.write_bytes(b"")
    return OutputBundle(
        run_id=run_id,
        archive=zip_dir(output_dir),
        console_log=console_path.read_bytes(),
    )


def rank_section_header(rank: int) -> bytes:
    return f"===== rank {rank} =====\n".encode("ascii")


def merge_consoles(ranked: list[tuple[int, bytes]]) -> bytes:
    """Concatenate console logs in strictly ascending rank order.

    Each section is prefixed by its rank header; log bytes are copied
    verbatim.
    """
    parts = []
    for rank, log in sorted(ranked, key=lambda item: item[0]):
        parts.append(rank_section_header(rank))
        parts.append(log)
    return b"".join(parts)


def aggregate_outputs(bundles: list[tuple[int, OutputBundle]]) -> bytes:
    """Build the request-level archive from (rank, bundle) pairs.

    Layout: each run's files under rank_<n>/, plus one merged console at the
    root. Bundle arrival order does not matter; ranks must be distinct.
    """
    seen: set[int] = set()
    for rank, _ in bundles:
        if rank in seen:
            raise DuplicateRank(rank)
        seen.add(rank)

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for rank, bundle in sorted(bundles, key=lambda item: item[0]):
            if not bundle.archive:
                continue  # console-only bundle contributes no files
            with zipfile.ZipFile(io.BytesIO(bundle.archive)) as run_zf:
                for info in run_zf.infolist():
                    data = run_zf.read(info.filename)
                    zf.writestr(f"rank_{rank}/{info.filename}", data)
        zf.writestr(
            MERGED_CONSOLE_NAME,
            merge_consoles([(rank, b.console_log) for rank, b in bundles]),
        )
    return buf.getvalue()
