"""Command-line client for the manager's REST API.

Covers the whole user- and operator-facing surface (submit, status, download,
cancel, rooms, clients, domains, processes, files) so scripts and the test
suite never need a browser. Every invocation is a pure HTTP client: the only
local state it touches is the optional config file it reads and the download
destination it writes.

Exit codes are a stable contract for scripts:
    0 success, 1 transport failure, 2 validation/unknown-entity,
    3 forbidden, 4 result not ready yet.
"""

from __future__ import annotations

import argparse
import base64
import io
import json
import os
import sys
import time
import zipfile
from dataclasses import dataclass
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_TRANSPORT = 1
EXIT_VALIDATION = 2
EXIT_FORBIDDEN = 3
EXIT_NOT_READY = 4

CONFIG_PATH_ENV = "GF_CLI_CONFIG"
URL_ENV = "GF_CLI_URL"
TOKEN_ENV = "GF_CLI_TOKEN"
ROOM_ENV = "GF_CLI_ROOM"
DOWNLOAD_DIR_ENV = "GF_CLI_DOWNLOAD_DIR"
DEFAULT_CONFIG_PATH = "~/.config/gridforge/cli.json"

MERGED_CONSOLE_NAME = "merged_output.txt"
RUN_CONSOLE_NAME = "output.txt"
TERMINAL_REQUEST_STATUSES = frozenset({"completed", "canceled", "failed"})

RUN_STATUS_NAMES = {
    0: "Pending",
    1: "Distributed",
    2: "Running",
    3: "Success",
    4: "Failed",
    5: "Canceled",
    6: "Building",
    7: "WaitingBarrier",
    8: "Orphaned",
}


class CliError(Exception):
    """Carries the exit code alongside the message printed to stderr."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class CliConfig:
    """Connection settings; the token is never echoed back in any output."""

    manager_url: str = "http://127.0.0.1:8080"
    token: str = ""
    default_room: int | None = None
    download_dir: str = "."


def load_cli_config(
    path: str | None = None, env: dict[str, str] | None = None
) -> CliConfig:
    """Build the config from file then environment, later layers winning.

    The file is JSON with keys matching the CliConfig fields; a missing file
    is fine (all defaults), a malformed one is a validation error.
    """
    env = os.environ if env is None else env
    candidate = path or env.get(CONFIG_PATH_ENV) or DEFAULT_CONFIG_PATH
    file_path = Path(candidate).expanduser()
    values: dict[str, object] = {}
    if file_path.is_file():
        try:
            raw = json.loads(file_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_VALIDATION, f"unreadable config {file_path}: {exc}")
        if not isinstance(raw, dict):
            raise CliError(EXIT_VALIDATION, f"config {file_path} must be a JSON object")
        values.update(raw)
    elif path is not None:
        raise CliError(EXIT_VALIDATION, f"config file not found: {file_path}")

    if URL_ENV in env:
        values["manager_url"] = env[URL_ENV]
    if TOKEN_ENV in env:
        values["token"] = env[TOKEN_ENV]
    if ROOM_ENV in env:
        values["default_room"] = env[ROOM_ENV]
    if DOWNLOAD_DIR_ENV in env:
        values["download_dir"] = env[DOWNLOAD_DIR_ENV]

    room = values.get("default_room")
    if room is not None:
        try:
            room = int(room)
        except (TypeError, ValueError):
            raise CliError(EXIT_VALIDATION, f"default_room is not an id: {room!r}")
    return CliConfig(
        manager_url=str(values.get("manager_url", CliConfig.manager_url)),
        token=str(values.get("token", "")),
        default_room=room,
        download_dir=str(values.get("download_dir", ".")),
    )


class ManagerClient:
    """Thin httpx wrapper translating API errors into CliError exit codes."""

    def __init__(self, config: CliConfig, timeout_s: float = 30.0) -> None:
        headers = {}
        if config.token:
            headers["Authorization"] = f"Bearer {config.token}"
        self._http = httpx.Client(
            base_url=config.manager_url.rstrip("/"),
            headers=headers,
            timeout=timeout_s,
        )

    def close(self) -> None:
        self._http.close()

    def get_json(self, path: str) -> dict:
        return self._request("GET", path).json()

    def post_json(self, path: str, body: dict) -> dict:
        return self._request("POST", path, json=body).json()

    def get_bytes(self, path: str) -> bytes:
        return self._request("GET", path).content

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        try:
            response = self._http.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            raise CliError(EXIT_TRANSPORT, f"transport failure: {exc}")
        if response.status_code < 400:
            return response
        raise _api_error(response)


def _api_error(response: httpx.Response) -> CliError:
    """Map an error response onto the exit-code contract."""
    try:
        body = response.json()
    except ValueError:
        body = {}
    kind = body.get("error", "")
    detail = body.get("detail", response.text[:200])
    message = f"{kind or response.status_code}: {detail}"
    fields = body.get("fields")
    if fields:
        joined = "; ".join(f"{name}: {why}" for name, why in sorted(fields.items()))
        message = f"{message} ({joined})"
    if response.status_code == 403:
        return CliError(EXIT_FORBIDDEN, message)
    if response.status_code in (404, 422):
        return CliError(EXIT_VALIDATION, message)
    if response.status_code == 409:
        if kind == "NotReady":
            return CliError(EXIT_NOT_READY, message)
        return CliError(EXIT_VALIDATION, message)
    return CliError(EXIT_TRANSPORT, message)


class Printer:
    """Human tables by default; stable tab-separated records with --porcelain."""

    def __init__(self, porcelain: bool, out=None) -> None:
        self.porcelain = porcelain
        self.out = out or sys.stdout

    def human(self, text: str) -> None:
        if not self.porcelain:
            print(text, file=self.out)

    def record(self, *fields: object) -> None:
        if self.porcelain:
            print("\t".join(str(f) for f in fields), file=self.out)

    def table(self, headers: list[str], rows: list[list[object]]) -> None:
        if self.porcelain:
            return
        cells = [[str(c) for c in row] for row in rows]
        widths = [len(h) for h in headers]
        for row in cells:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        line = " | ".join(h.ljust(widths[i]) for i, h in enumerate(headers))
        print(line, file=self.out)
        print("-+-".join("-" * w for w in widths), file=self.out)
        for row in cells:
            print(
                " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)),
                file=self.out,
            )


def _read_payload(value: str) -> str:
    """A leading @ means read the rest as a file path, like curl's -d."""
    if value.startswith("@"):
        path = Path(value[1:]).expanduser()
        try:
            return path.read_text()
        except OSError as exc:
            raise CliError(EXIT_VALIDATION, f"cannot read {path}: {exc}")
    return value


def _read_binary(path_str: str) -> bytes:
    path = Path(path_str).expanduser()
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CliError(EXIT_VALIDATION, f"cannot read {path}: {exc}")


# -- request commands --------------------------------------------------------


def _request_summary_line(view: dict) -> str:
    done = sum(1 for r in view["runs"] if r["status"] == 3)
    return (
        f"request {view['request_id']}: {view['status']}"
        f" ({done}/{view['repetitions']} succeeded)"
    )


def _watch_request(client: ManagerClient, printer: Printer,
                   request_id: int, interval_s: float) -> dict:
    """Poll until terminal, printing one status line whenever it changes."""
    last = None
    while True:
        view = client.get_json(f"/api/v1/requests/{request_id}")
        snapshot = (view["status"], tuple(r["status"] for r in view["runs"]))
        if snapshot != last:
            printer.human(_request_summary_line(view))
            printer.record(
                "watch", request_id, view["status"], f"{view['progress']:.3f}"
            )
            last = snapshot
        if view["status"] in TERMINAL_REQUEST_STATUSES:
            return view
        time.sleep(interval_s)


def _print_run_table(printer: Printer, view: dict) -> None:
    printer.record(
        "request", view["request_id"], view["status"], f"{view['progress']:.3f}"
    )
    rows = []
    for run in view["runs"]:
        client_id = run["client_id"] if run["client_id"] is not None else "-"
        rows.append(
            [run["run_id"], run["rank"], client_id, run["status"], run["obs"]]
        )
        printer.record(
            "run", run["run_id"], run["rank"], client_id, run["status"], run["obs"]
        )
    printer.human(_request_summary_line(view))
    printer.table(["id", "rank", "client_id", "status", "obs"], rows)


def cmd_submit(client: ManagerClient, printer: Printer,
               config: CliConfig, args: argparse.Namespace) -> int:
    rooms = list(args.room)
    if not rooms and config.default_room is not None:
        rooms = [config.default_room]
    spec = {
        "domain_id": args.domain,
        "process_id": args.process,
        "repetitions": args.repetitions,
        "parameters": list(args.parameter),
        "parallel": args.parallel,
        "needs_gpu": args.needs_gpu,
        "same_machine": args.same_machine,
        "room_ids": rooms,
        "shared_file_ids": list(args.shared_file),
    }
    request_id = client.post_json("/api/v1/requests", spec)["request_id"]
    printer.human(f"request {request_id}")
    printer.record("request", request_id)
    if args.watch:
        view = _watch_request(client, printer, request_id, args.interval)
        _print_run_table(printer, view)
    return EXIT_OK


def cmd_status(client: ManagerClient, printer: Printer,
               config: CliConfig, args: argparse.Namespace) -> int:
    if args.request_id is None:
        listing = client.get_json("/api/v1/requests")["requests"]
        rows = []
        for req in listing:
            rows.append([
                req["request_id"], req["user"], req["status"],
                f"{req['progress']:.2f}", req["repetitions"],
            ])
            printer.record(
                "request", req["request_id"], req["user"], req["status"],
                f"{req['progress']:.3f}", req["repetitions"],
            )
        printer.table(["id", "user", "status", "progress", "repetitions"], rows)
        return EXIT_OK
    if args.watch:
        view = _watch_request(client, printer, args.request_id, args.interval)
    else:
        view = client.get_json(f"/api/v1/requests/{args.request_id}")
    _print_run_table(printer, view)
    return EXIT_OK


def cmd_download(client: ManagerClient, printer: Printer,
                 config: CliConfig, args: argparse.Namespace) -> int:
    dest = Path(args.dest or config.download_dir).expanduser()
    dest.mkdir(parents=True, exist_ok=True)
    if args.run is not None:
        archive = client.get_bytes(f"/api/v1/runs/{args.run}/bundle")
        stem, console_member = f"run_{args.run}", RUN_CONSOLE_NAME
    else:
        archive = client.get_bytes(f"/api/v1/requests/{args.request_id}/bundle")
        stem, console_member = f"request_{args.request_id}", MERGED_CONSOLE_NAME
    archive_path = dest / f"{stem}.zip"
    archive_path.write_bytes(archive)
    printer.human(f"archive {archive_path}")
    printer.record("archive", archive_path)
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        if console_member in zf.namelist():
            console_path = dest / f"{stem}_{console_member}"
            console_path.write_bytes(zf.read(console_member))
            printer.human(f"console {console_path}")
            printer.record("console", console_path)
    return EXIT_OK


def cmd_cancel(client: ManagerClient, printer: Printer,
               config: CliConfig, args: argparse.Namespace) -> int:
    client.post_json(f"/api/v1/requests/{args.request_id}/cancel", {})
    printer.human(f"cancel requested for {args.request_id}")
    printer.record("canceled", args.request_id)
    return EXIT_OK


# -- room commands ------------------------------------------------------------


def cmd_rooms_create(client: ManagerClient, printer: Printer,
                     config: CliConfig, args: argparse.Namespace) -> int:
    body = {
        "name": args.name,
        "visibility": "restricted" if args.restricted else "public",
        "member_users": list(args.member),
    }
    room_id = client.post_json("/api/v1/rooms", body)["room_id"]
    printer.human(f"room {room_id}")
    printer.record("room", room_id)
    return EXIT_OK


def cmd_rooms_assign(client: ManagerClient, printer: Printer,
                     config: CliConfig, args: argparse.Namespace) -> int:
    client.post_json(
        f"/api/v1/rooms/{args.room_id}/assign", {"client_id": args.client_id}
    )
    printer.human(f"client {args.client_id} assigned to room {args.room_id}")
    printer.record("assigned", args.room_id, args.client_id)
    return EXIT_OK


def cmd_rooms_list(client: ManagerClient, printer: Printer,
                   config: CliConfig, args: argparse.Namespace) -> int:
    rooms = client.get_json("/api/v1/rooms")["rooms"]
    rows = []
    for room in rooms:
        clients = ",".join(str(c) for c in room["client_ids"]) or "-"
        members = ",".join(room["member_users"]) or "-"
        rows.append([
            room["room_id"], room["name"], room["owner_user"],
            room["visibility"], clients, members,
        ])
        printer.record(
            "room", room["room_id"], room["name"], room["owner_user"],
            room["visibility"], clients, members,
        )
    printer.table(
        ["id", "name", "owner", "visibility", "clients", "members"], rows
    )
    return EXIT_OK


# -- client commands -----------------------------------------------------------


def cmd_clients_list(client: ManagerClient, printer: Printer,
                     config: CliConfig, args: argparse.Namespace) -> int:
    clients = client.get_json("/api/v1/clients")["clients"]
    rows = []
    for row in clients:
        snapshot = row["snapshot"]
        room = row["room_id"] if row["room_id"] is not None else "-"
        slots = f"{row['active_runs']}/{row['max_concurrent_runs']}"
        rows.append([
            row["client_id"], row["address"], room, row["availability"],
            "yes" if row["accepting_new"] else "no",
            f"{snapshot['cpu_pct']:.0f}%", f"{snapshot['ram_pct']:.0f}%",
            "yes" if row["has_gpu"] else "no",
            "yes" if snapshot["interactive_user_present"] else "no",
            slots,
        ])
        printer.record(
            "client", row["client_id"], row["address"], room,
            row["availability"], int(row["accepting_new"]),
            f"{snapshot['cpu_pct']:.1f}", f"{snapshot['ram_pct']:.1f}",
            int(row["has_gpu"]), int(snapshot["interactive_user_present"]),
            slots,
        )
    printer.table(
        ["id", "address", "room", "availability", "accepting",
         "cpu", "ram", "gpu", "user", "runs"],
        rows,
    )
    return EXIT_OK


# -- domain commands -----------------------------------------------------------


def cmd_domains_create(client: ManagerClient, printer: Printer,
                       config: CliConfig, args: argparse.Namespace) -> int:
    body = {
        "name": args.name,
        "build_recipe": _read_payload(args.recipe),
        "dependency_manifest": _read_payload(args.manifest),
        "store": args.store,
    }
    domain_id = client.post_json("/api/v1/domains", body)["domain_id"]
    printer.human(f"domain {domain_id}")
    printer.record("domain", domain_id)
    return EXIT_OK


def cmd_domains_list(client: ManagerClient, printer: Printer,
                     config: CliConfig, args: argparse.Namespace) -> int:
    domains = client.get_json("/api/v1/domains")["domains"]
    rows = []
    for domain in domains:
        rows.append([
            domain["domain_id"], domain["name"], domain["owner_user"],
            domain["origin"], "yes" if domain["approved"] else "no",
            domain["content_hash"][:12],
        ])
        printer.record(
            "domain", domain["domain_id"], domain["name"],
            domain["owner_user"], domain["origin"],
            int(domain["approved"]), domain["content_hash"],
        )
    printer.table(
        ["id", "name", "owner", "origin", "approved", "hash"], rows
    )
    return EXIT_OK


def cmd_domains_approve(client: ManagerClient, printer: Printer,
                        config: CliConfig, args: argparse.Namespace) -> int:
    approved = not args.revoke
    client.post_json(
        f"/api/v1/domains/{args.domain_id}/approve", {"approved": approved}
    )
    verb = "approved" if approved else "revoked"
    printer.human(f"domain {args.domain_id} {verb}")
    printer.record(verb, args.domain_id)
    return EXIT_OK


# -- process commands ----------------------------------------------------------


def cmd_processes_create(client: ManagerClient, printer: Printer,
                         config: CliConfig, args: argparse.Namespace) -> int:
    payload = _read_binary(args.payload)
    kind = "archive" if args.payload.endswith(".zip") else "single"
    body = {
        "name": args.name,
        "entry_command": args.entry,
        "payload_kind": kind,
        "payload_filename": Path(args.payload).name if kind == "single" else "",
        "payload_b64": base64.b64encode(payload).decode("ascii"),
    }
    process_id = client.post_json("/api/v1/processes", body)["process_id"]
    printer.human(f"process {process_id}")
    printer.record("process", process_id)
    return EXIT_OK


def cmd_processes_list(client: ManagerClient, printer: Printer,
                       config: CliConfig, args: argparse.Namespace) -> int:
    processes = client.get_json("/api/v1/processes")["processes"]
    rows = []
    for proc in processes:
        rows.append([
            proc["process_id"], proc["name"], proc["owner_user"],
            proc["entry_command"], proc["payload_kind"], proc["payload_size"],
        ])
        printer.record(
            "process", proc["process_id"], proc["name"], proc["owner_user"],
            proc["entry_command"], proc["payload_kind"], proc["payload_size"],
        )
    printer.table(
        ["id", "name", "owner", "entry", "kind", "bytes"], rows
    )
    return EXIT_OK


# -- file commands -------------------------------------------------------------


def cmd_files_upload(client: ManagerClient, printer: Printer,
                     config: CliConfig, args: argparse.Namespace) -> int:
    content = _read_binary(args.path)
    name = args.name or Path(args.path).name
    body = {"name": name, "content_b64": base64.b64encode(content).decode("ascii")}
    file_id = client.post_json("/api/v1/files", body)["file_id"]
    printer.human(f"file {file_id}")
    printer.record("file", file_id)
    return EXIT_OK


def cmd_files_list(client: ManagerClient, printer: Printer,
                   config: CliConfig, args: argparse.Namespace) -> int:
    files = client.get_json("/api/v1/files")["files"]
    rows = []
    for entry in files:
        rows.append([
            entry["file_id"], entry["name"], entry["owner_user"],
            entry["size_bytes"], entry["content_hash"][:12],
        ])
        printer.record(
            "file", entry["file_id"], entry["name"], entry["owner_user"],
            entry["size_bytes"], entry["content_hash"],
        )
    printer.table(["id", "name", "owner", "bytes", "hash"], rows)
    return EXIT_OK


# -- argument plumbing ---------------------------------------------------------


def _add_watch_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--watch", action="store_true",
        help="poll and print status lines until the request is terminal",
    )
    parser.add_argument(
        "--interval", type=float, default=2.0,
        help="seconds between --watch polls",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridforge",
        description="command-line client for a gridforge manager",
    )
    parser.add_argument("--url", help="manager base URL (overrides config/env)")
    parser.add_argument("--token", help="bearer token (overrides config/env)")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument(
        "--porcelain", action="store_true",
        help="print stable tab-separated records instead of tables",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("submit", help="submit a process request")
    p.add_argument("--domain", type=int, required=True, help="domain id")
    p.add_argument("--process", type=int, required=True, help="process id")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument(
        "--parameter", action="append", default=[],
        help="positional parameter, repeatable; rank is appended at launch",
    )
    p.add_argument("--parallel", action="store_true",
                   help="gate all ranks behind a common start barrier")
    p.add_argument("--same-machine", action="store_true",
                   help="keep every rank on one client")
    p.add_argument("--needs-gpu", action="store_true")
    p.add_argument("--room", action="append", type=int, default=[],
                   help="room id, repeatable; defaults to the configured room")
    p.add_argument("--shared-file", action="append", type=int, default=[],
                   help="shared file id, repeatable")
    _add_watch_flags(p)
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("status", help="show request status and the run table")
    p.add_argument("request_id", type=int, nargs="?",
                   help="omit to list all visible requests")
    _add_watch_flags(p)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("download", help="download a result archive")
    p.add_argument("request_id", type=int, nargs="?")
    p.add_argument("--run", type=int, help="download one run instead")
    p.add_argument("--dest", help="destination directory")
    p.set_defaults(func=cmd_download)

    p = sub.add_parser("cancel", help="cancel a request")
    p.add_argument("request_id", type=int)
    p.set_defaults(func=cmd_cancel)

    rooms = sub.add_parser("rooms", help="create, assign, list rooms")
    rooms_sub = rooms.add_subparsers(dest="rooms_command", required=True)
    p = rooms_sub.add_parser("create")
    p.add_argument("name")
    p.add_argument("--restricted", action="store_true",
                   help="visible only to the owner and listed members")
    p.add_argument("--member", action="append", default=[],
                   help="user granted access to a restricted room, repeatable")
    p.set_defaults(func=cmd_rooms_create)
    p = rooms_sub.add_parser("assign")
    p.add_argument("room_id", type=int)
    p.add_argument("client_id", type=int)
    p.set_defaults(func=cmd_rooms_assign)
    p = rooms_sub.add_parser("list")
    p.set_defaults(func=cmd_rooms_list)

    clients = sub.add_parser("clients", help="inspect registered clients")
    clients_sub = clients.add_subparsers(dest="clients_command", required=True)
    p = clients_sub.add_parser("list")
    p.set_defaults(func=cmd_clients_list)

    domains = sub.add_parser("domains", help="manage execution domains")
    domains_sub = domains.add_subparsers(dest="domains_command", required=True)
    p = domains_sub.add_parser("create")
    p.add_argument("name")
    p.add_argument("--recipe", default="",
                   help="build recipe text, or @path to read a file")
    p.add_argument("--manifest", default="",
                   help="dependency manifest text, or @path to read a file")
    p.add_argument("--store", action="store_true",
                   help="offer the domain to the shared store")
    p.set_defaults(func=cmd_domains_create)
    p = domains_sub.add_parser("list")
    p.set_defaults(func=cmd_domains_list)
    p = domains_sub.add_parser("approve")
    p.add_argument("domain_id", type=int)
    p.add_argument("--revoke", action="store_true")
    p.set_defaults(func=cmd_domains_approve)

    processes = sub.add_parser("processes", help="manage process definitions")
    processes_sub = processes.add_subparsers(dest="processes_command", required=True)
    p = processes_sub.add_parser("create")
    p.add_argument("name")
    p.add_argument("--payload", required=True,
                   help="source file, or a .zip archive of sources")
    p.add_argument("--entry", default="python3 main.py",
                   help="command executed inside the domain")
    p.set_defaults(func=cmd_processes_create)
    p = processes_sub.add_parser("list")
    p.set_defaults(func=cmd_processes_list)

    files = sub.add_parser("files", help="manage shared input files")
    files_sub = files.add_subparsers(dest="files_command", required=True)
    p = files_sub.add_parser("upload")
    p.add_argument("path")
    p.add_argument("--name", help="stored name, defaults to the file name")
    p.set_defaults(func=cmd_files_upload)
    p = files_sub.add_parser("list")
    p.set_defaults(func=cmd_files_list)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "download" and args.request_id is None and args.run is None:
            raise CliError(EXIT_VALIDATION, "a request id or --run is required")
        config = load_cli_config(args.config)
        if args.url:
            config = CliConfig(
                manager_url=args.url, token=config.token,
                default_room=config.default_room, download_dir=config.download_dir,
            )
        if args.token:
            config = CliConfig(
                manager_url=config.manager_url, token=args.token,
                default_room=config.default_room, download_dir=config.download_dir,
            )
        client = ManagerClient(config)
        try:
            return args.func(client, Printer(args.porcelain), config, args)
        finally:
            client.close()
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
