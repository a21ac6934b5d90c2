"""End-to-end tests for the command-line client.

A single one-agent loopback cluster serves the whole module; every assertion
goes through `gridforge.cli.main` exactly as a shell invocation would, so the
exit-code contract, the output formats, and the REST round trips are all
checked together against a live manager.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from types import SimpleNamespace

import pytest

from gridforge.cli import main
from gridforge.harness.cluster import ADMIN_TOKEN, USER_TOKEN, Cluster
from gridforge.harness.workloads import workload_source


@pytest.fixture(scope="module")
def grid():
    with Cluster(n_agents=1, time_compression=10.0) as cluster:
        ids = SimpleNamespace()
        ids.domain = cluster.seed_domain()
        ids.process = cluster.seed_process("hello", workload_source("print_basic"))
        ids.slow = cluster.seed_process("naps", workload_source("sleep_loop"))
        ids.room = cluster.repo.list_rooms()[0].room_id
        cluster.ids = ids
        yield cluster


@pytest.fixture
def run_cli(grid, monkeypatch, capsys):
    monkeypatch.setenv("GF_CLI_URL", grid.manager_url)
    monkeypatch.setenv("GF_CLI_TOKEN", USER_TOKEN)
    monkeypatch.delenv("GF_CLI_CONFIG", raising=False)

    def invoke(*argv: str, token: str = USER_TOKEN):
        monkeypatch.setenv("GF_CLI_TOKEN", token)
        code = main(list(argv))
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return invoke


def porcelain_rows(out: str, kind: str) -> list[list[str]]:
    rows = [line.split("\t") for line in out.splitlines() if line]
    return [row for row in rows if row[0] == kind]


@pytest.fixture(scope="module")
def completed_request(grid):
    """One finished two-rank request shared by the status/download tests."""
    request_id = grid.submit(
        grid.ids.domain, grid.ids.process, repetitions=2, parameters=["a"],
    )
    grid.wait_request(request_id, timeout=60, statuses={"completed"})
    return request_id


# -- catalog commands ---------------------------------------------------------


def test_files_upload_and_list(run_cli, tmp_path):
    content = b"a,b\n1,2\n"
    path = tmp_path / "lookup.csv"
    path.write_bytes(content)

    code, out, _ = run_cli("--porcelain", "files", "upload", str(path))
    assert code == 0
    file_id = porcelain_rows(out, "file")[0][1]

    code, out, _ = run_cli("--porcelain", "files", "list")
    assert code == 0
    mine = [r for r in porcelain_rows(out, "file") if r[1] == file_id]
    assert mine[0][2] == "lookup.csv"
    assert mine[0][3] == "alice"
    assert mine[0][4] == str(len(content))
    assert mine[0][5] == hashlib.sha256(content).hexdigest()


def test_domains_create_list_approve(run_cli, tmp_path):
    recipe = tmp_path / "recipe.txt"
    recipe.write_text("base: python3\n")

    code, out, _ = run_cli(
        "--porcelain", "domains", "create", "lab-env",
        "--recipe", f"@{recipe}", "--manifest", "numpy==1.0", "--store",
    )
    assert code == 0
    domain_id = porcelain_rows(out, "domain")[0][1]

    code, out, _ = run_cli("--porcelain", "domains", "list")
    row = [r for r in porcelain_rows(out, "domain") if r[1] == domain_id][0]
    assert row[2] == "lab-env"
    assert row[4] == "store"
    assert row[5] == "0"  # a store offer waits for administrator approval

    code, _, _ = run_cli("domains", "approve", domain_id, token=ADMIN_TOKEN)
    assert code == 0
    _, out, _ = run_cli("--porcelain", "domains", "list")
    row = [r for r in porcelain_rows(out, "domain") if r[1] == domain_id][0]
    assert row[5] == "1"

    code, _, _ = run_cli(
        "domains", "approve", domain_id, "--revoke", token=ADMIN_TOKEN
    )
    assert code == 0

    code, _, err = run_cli("domains", "approve", domain_id)
    assert code == 3
    assert "admin" in err


def test_processes_create_and_list(run_cli, tmp_path):
    source = tmp_path / "main.py"
    source.write_bytes(workload_source("print_basic"))

    code, out, _ = run_cli(
        "--porcelain", "processes", "create", "printer",
        "--payload", str(source), "--entry", "python3 main.py",
    )
    assert code == 0
    process_id = porcelain_rows(out, "process")[0][1]

    code, out, _ = run_cli("--porcelain", "processes", "list")
    row = [r for r in porcelain_rows(out, "process") if r[1] == process_id][0]
    assert row[2] == "printer"
    assert row[4] == "python3 main.py"
    assert row[5] == "single"


def test_rooms_lifecycle(run_cli, grid):
    code, out, _ = run_cli(
        "--porcelain", "rooms", "create", "annex",
        "--restricted", "--member", "alice", token=ADMIN_TOKEN,
    )
    assert code == 0
    room_id = porcelain_rows(out, "room")[0][1]

    client_id = grid.client_id_of("agent0")
    code, _, _ = run_cli(
        "rooms", "assign", room_id, str(client_id), token=ADMIN_TOKEN
    )
    assert code == 0

    code, out, _ = run_cli("rooms", "list")
    assert code == 0
    annex = [line for line in out.splitlines() if "annex" in line][0]
    assert "restricted" in annex
    assert str(client_id) in annex

    # Non-admins may not shuffle clients out of rooms they do not own.
    code, _, _ = run_cli("rooms", "assign", "1", str(client_id))
    assert code == 3

    code, _, _ = run_cli(
        "rooms", "assign", "1", str(client_id), token=ADMIN_TOKEN
    )
    assert code == 0


def test_clients_list_renders_status_panel(run_cli, grid):
    code, out, _ = run_cli("clients", "list")
    assert code == 0
    assert "availability" in out
    assert "available" in out
    assert "127.0.0.1:" in out

    code, out, _ = run_cli("--porcelain", "clients", "list")
    rows = porcelain_rows(out, "client")
    assert len(rows) == 1
    assert rows[0][1] == str(grid.client_id_of("agent0"))


# -- request lifecycle ---------------------------------------------------------


def test_submit_watch_prints_terminal_table(run_cli, grid):
    code, out, _ = run_cli(
        "submit", "--domain", str(grid.ids.domain),
        "--process", str(grid.ids.process),
        "--repetitions", "2", "--parameter", "a",
        "--room", str(grid.ids.room),
        "--watch", "--interval", "0.2",
    )
    assert code == 0
    assert out.startswith("request ")
    assert "completed (2/2 succeeded)" in out
    assert "id | rank | client_id | status | obs" in out.replace("  ", " ")
    assert "Success" in out


def test_submit_validation_maps_to_exit_2(run_cli, grid):
    code, _, err = run_cli(
        "submit", "--domain", "424242", "--process", str(grid.ids.process),
        "--room", str(grid.ids.room),
    )
    assert code == 2
    assert "domain_id" in err


def test_status_table_lists_every_run(run_cli, completed_request):
    code, out, _ = run_cli("--porcelain", "status", str(completed_request))
    assert code == 0
    header = porcelain_rows(out, "request")[0]
    assert header[2] == "completed"
    assert header[3] == "1.000"
    runs = porcelain_rows(out, "run")
    assert len(runs) == 2
    assert sorted(int(r[2]) for r in runs) == [0, 1]
    assert all(r[4] == "3" for r in runs)
    assert all(r[5] == "Success" for r in runs)


def test_status_without_id_lists_requests(run_cli, completed_request):
    code, out, _ = run_cli("status")
    assert code == 0
    lines = [line for line in out.splitlines()
             if line.startswith(f"{completed_request} ")]
    assert lines and "completed" in lines[0]


def test_status_unknown_request_maps_to_exit_2(run_cli):
    code, _, err = run_cli("status", "424242")
    assert code == 2
    assert "424242" in err


def test_download_extracts_merged_console(run_cli, completed_request, tmp_path):
    code, out, _ = run_cli(
        "--porcelain", "download", str(completed_request),
        "--dest", str(tmp_path),
    )
    assert code == 0
    archive = tmp_path / f"request_{completed_request}.zip"
    console = tmp_path / f"request_{completed_request}_merged_output.txt"
    assert porcelain_rows(out, "archive")[0][1] == str(archive)
    assert porcelain_rows(out, "console")[0][1] == str(console)
    assert console.read_bytes() == (
        b"===== rank 0 =====\nrank 0 of 2 params=a\n"
        b"===== rank 1 =====\nrank 1 of 2 params=a\n"
    )
    with zipfile.ZipFile(archive) as zf:
        assert zf.read("merged_output.txt") == console.read_bytes()


def test_download_single_run(run_cli, completed_request, tmp_path):
    _, out, _ = run_cli("--porcelain", "status", str(completed_request))
    rank0 = [r for r in porcelain_rows(out, "run") if r[2] == "0"][0]
    run_id = rank0[1]

    code, _, _ = run_cli("download", "--run", run_id, "--dest", str(tmp_path))
    assert code == 0
    assert (tmp_path / f"run_{run_id}.zip").exists()
    console = tmp_path / f"run_{run_id}_output.txt"
    assert console.read_bytes() == b"rank 0 of 2 params=a\n"


def test_download_before_completion_maps_to_exit_4(run_cli, grid):
    code, out, _ = run_cli(
        "--porcelain", "submit", "--domain", str(grid.ids.domain),
        "--process", str(grid.ids.slow), "--parameter", "300",
        "--room", str(grid.ids.room),
    )
    assert code == 0
    request_id = porcelain_rows(out, "request")[0][1]

    code, _, err = run_cli("download", request_id)
    assert code == 4
    assert "NotReady" in err

    code, _, _ = run_cli("cancel", request_id)
    assert code == 0
    grid.wait_request(int(request_id), timeout=30, statuses={"canceled"})

    code, _, err = run_cli("cancel", request_id)
    assert code == 2
    assert "canceled" in err


def test_download_needs_a_target(run_cli):
    code, _, err = run_cli("download")
    assert code == 2
    assert "request id" in err


# -- connection plumbing ---------------------------------------------------------


def test_transport_failure_maps_to_exit_1(run_cli):
    code, _, err = run_cli("--url", "http://127.0.0.1:9", "clients", "list")
    assert code == 1
    assert err.startswith("error: transport failure")


def test_invalid_token_maps_to_exit_3(run_cli):
    code, _, err = run_cli("clients", "list", token="not-a-token")
    assert code == 3
    assert "invalid token" in err


def test_token_is_never_printed(run_cli, grid):
    transcripts = []
    for argv in (
        ("clients", "list"),
        ("--porcelain", "status"),
        ("status", "424242"),
        ("rooms", "assign", "1", str(grid.client_id_of("agent0"))),
    ):
        _, out, err = run_cli(*argv)
        transcripts.append(out + err)
    blob = "\n".join(transcripts)
    assert USER_TOKEN not in blob
    assert ADMIN_TOKEN not in blob


def test_config_file_supplies_url_token_room_and_dest(
    grid, monkeypatch, capsys, tmp_path
):
    downloads = tmp_path / "results"
    config = tmp_path / "cli.json"
    config.write_text(json.dumps({
        "manager_url": grid.manager_url,
        "token": USER_TOKEN,
        "default_room": grid.ids.room,
        "download_dir": str(downloads),
    }))
    monkeypatch.delenv("GF_CLI_URL", raising=False)
    monkeypatch.delenv("GF_CLI_TOKEN", raising=False)

    code = main([
        "--config", str(config), "--porcelain", "submit",
        "--domain", str(grid.ids.domain), "--process", str(grid.ids.process),
        "--watch", "--interval", "0.2",
    ])
    out = capsys.readouterr().out
    assert code == 0
    request_id = porcelain_rows(out, "request")[0][1]
    assert grid.request_view(int(request_id))["room_ids"] == [grid.ids.room]

    code = main(["--config", str(config), "download", request_id])
    assert code == 0
    capsys.readouterr()
    assert (downloads / f"request_{request_id}.zip").exists()


def test_env_overrides_config_file(grid, monkeypatch, capsys, tmp_path):
    config = tmp_path / "cli.json"
    config.write_text(json.dumps({
        "manager_url": "http://127.0.0.1:9",
        "token": "stale-token",
    }))
    monkeypatch.setenv("GF_CLI_CONFIG", str(config))
    monkeypatch.setenv("GF_CLI_URL", grid.manager_url)
    monkeypatch.setenv("GF_CLI_TOKEN", USER_TOKEN)

    code = main(["clients", "list"])
    capsys.readouterr()
    assert code == 0

    # An explicit flag outranks the environment.
    code = main(["--token", "stale-token", "clients", "list"])
    err = capsys.readouterr().err
    assert code == 3
    assert "invalid token" in err


def test_malformed_config_file_maps_to_exit_2(monkeypatch, capsys, tmp_path):
    config = tmp_path / "cli.json"
    config.write_text("not json")
    code = main(["--config", str(config), "clients", "list"])
    err = capsys.readouterr().err
    assert code == 2
    assert "unreadable config" in err


def test_missing_config_file_maps_to_exit_2(monkeypatch, capsys, tmp_path):
    code = main(["--config", str(tmp_path / "absent.json"), "clients", "list"])
    err = capsys.readouterr().err
    assert code == 2
    assert "not found" in err
