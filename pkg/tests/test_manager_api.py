import base64
import io
import zipfile

import pytest
from fastapi.testclient import TestClient

from gridforge.manager.api import create_app
from gridforge.manager.config import ManagerConfig, TokenInfo
from gridforge.manager.core import Manager
from gridforge.repository import Repository

from fakes import FakeGateway

USER = {"Authorization": "Bearer t-user"}
OTHER = {"Authorization": "Bearer t-other"}
ADMIN = {"Authorization": "Bearer t-admin"}
AGENT = {"Authorization": "Bearer t-agent"}


@pytest.fixture()
def rig():
    repo = Repository()
    config = ManagerConfig(
        db_path=":memory:",
        tokens={
            "t-user": TokenInfo(user="alice"),
            "t-other": TokenInfo(user="bob"),
            "t-admin": TokenInfo(user="root", admin=True),
            "t-agent": TokenInfo(user="fleet", agent=True),
        },
    )
    gateway = FakeGateway()
    manager = Manager(config, repo, gateway=gateway)
    with TestClient(create_app(manager)) as http:
        yield http, manager, gateway
    repo.close()


def _register_agent(http, key="agent-1", port=9100):
    resp = http.post("/api/v1/clients/register", headers=AGENT, json={
        "agent_key": key, "host": "127.0.0.1", "port": port,
        "has_gpu": False, "cores": 4, "ram_mb": 2048,
        "config": {"max_concurrent_runs": 4},
    })
    assert resp.status_code == 200
    client_id = resp.json()["client_id"]
    resp = http.post(f"/api/v1/clients/{client_id}/heartbeat", headers=AGENT, json={
        "snapshot": {"cpu_pct": 10.0}, "accepting_new": True,
    })
    assert resp.status_code == 200
    return client_id


def _seed_catalog(http, client_id):
    room_id = http.post("/api/v1/rooms", headers=USER,
                        json={"name": "lab"}).json()["room_id"]
    resp = http.post(f"/api/v1/rooms/{room_id}/assign", headers=ADMIN,
                     json={"client_id": client_id})
    assert resp.status_code == 200
    domain_id = http.post("/api/v1/domains", headers=USER, json={
        "name": "py", "build_recipe": "base: python3", "dependency_manifest": "",
    }).json()["domain_id"]
    payload = base64.b64encode(b"print('hello')").decode()
    process_id = http.post("/api/v1/processes", headers=USER, json={
        "name": "hello", "entry_command": "python3 main.py",
        "payload_kind": "single", "payload_filename": "main.py",
        "payload_b64": payload,
    }).json()["process_id"]
    return room_id, domain_id, process_id


def test_missing_and_invalid_tokens_are_rejected(rig):
    http, _, _ = rig
    assert http.get("/api/v1/clients").status_code == 403
    bad = {"Authorization": "Bearer nope"}
    assert http.get("/api/v1/clients", headers=bad).status_code == 403
    assert http.get("/healthz").status_code == 200  # liveness probe stays open


def test_identity_endpoint_reports_user_and_admin_flag(rig):
    http, _, _ = rig
    assert http.get("/api/v1/me", headers=USER).json() == {
        "user": "alice", "admin": False,
    }
    assert http.get("/api/v1/me", headers=ADMIN).json() == {
        "user": "root", "admin": True,
    }
    assert http.get("/api/v1/me").status_code == 403


def test_role_separation_on_agent_and_admin_routes(rig):
    http, _, _ = rig
    resp = http.post("/api/v1/clients/register", headers=USER, json={})
    assert resp.status_code == 403
    resp = http.post("/api/v1/domains/1/approve", headers=USER, json={})
    assert resp.status_code == 403


def test_validation_errors_carry_field_map(rig):
    http, _, _ = rig
    resp = http.post("/api/v1/requests", headers=USER, json={
        "domain_id": 1, "process_id": 1, "room_ids": [1],
    })
    assert resp.status_code == 422
    fields = resp.json()["fields"]
    assert {"domain_id", "process_id", "room_ids"} <= set(fields)


def test_unknown_entities_map_to_404(rig):
    http, _, _ = rig
    assert http.get("/api/v1/requests/999", headers=USER).status_code == 404
    assert http.get("/api/v1/domains/999/spec", headers=AGENT).status_code == 404


def test_bad_entry_command_rejected_with_422(rig):
    http, _, _ = rig
    resp = http.post("/api/v1/processes", headers=USER, json={
        "name": "broken", "entry_command": "python3 other.py",
        "payload_kind": "single", "payload_filename": "main.py",
        "payload_b64": base64.b64encode(b"print()").decode(),
    })
    assert resp.status_code == 422
    assert "entry_command" in resp.json()["fields"]


def test_full_lifecycle_over_rest(rig):
    http, manager, gateway = rig
    client_id = _register_agent(http)
    room_id, domain_id, process_id = _seed_catalog(http, client_id)

    resp = http.post("/api/v1/requests", headers=USER, json={
        "domain_id": domain_id, "process_id": process_id,
        "repetitions": 2, "room_ids": [room_id],
    })
    assert resp.status_code == 200
    request_id = resp.json()["request_id"]

    # Bundle is not ready while the request is live; other users are barred.
    assert http.get(f"/api/v1/requests/{request_id}/bundle",
                    headers=USER).status_code == 409
    assert http.get(f"/api/v1/requests/{request_id}",
                    headers=OTHER).status_code == 403

    manager.scheduler_tick()
    detail = http.get(f"/api/v1/requests/{request_id}", headers=USER).json()
    assert [r["status"] for r in detail["runs"]] == [1, 1]

    # The assigned agent walks each run through the reporting endpoints.
    for run in detail["runs"]:
        rid = run["run_id"]
        base = f"/api/v1/clients/{client_id}/runs/{rid}"
        assert http.post(f"{base}/status", headers=AGENT,
                         json={"event": "started"}).status_code == 200
        assert http.post(f"{base}/progress", headers=AGENT,
                         json={"percent": 50.0, "message": "half"}).status_code == 200
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            zf.writestr("output.txt", f"rank {run['rank']}\n")
        assert http.post(f"{base}/result", headers=AGENT, json={
            "outcome": "succeeded",
            "bundle_b64": base64.b64encode(buf.getvalue()).decode(),
            "console_b64": base64.b64encode(f"rank {run['rank']}\n".encode()).decode(),
        }).status_code == 200

    listing = http.get("/api/v1/requests", headers=USER).json()["requests"]
    assert listing[0]["status"] == "completed" and listing[0]["progress"] == 1.0

    resp = http.get(f"/api/v1/requests/{request_id}/bundle", headers=USER)
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "application/zip"
    with zipfile.ZipFile(io.BytesIO(resp.content)) as zf:
        assert "merged_output.txt" in zf.namelist()
        merged = zf.read("merged_output.txt").decode()
    assert merged.index("rank 0") < merged.index("rank 1")

    run_id = detail["runs"][0]["run_id"]
    resp = http.get(f"/api/v1/runs/{run_id}/bundle", headers=USER)
    assert resp.status_code == 200


def test_agent_fetches_payload_spec_and_files(rig):
    http, manager, _ = rig
    client_id = _register_agent(http)
    room_id, domain_id, process_id = _seed_catalog(http, client_id)

    resp = http.get(f"/api/v1/domains/{domain_id}/spec", headers=AGENT)
    assert resp.json()["build_recipe"] == "base: python3"

    resp = http.get(f"/api/v1/processes/{process_id}/payload", headers=AGENT)
    assert resp.content == b"print('hello')"
    assert resp.headers["content-type"] == "application/octet-stream"

    file_id = http.post("/api/v1/files", headers=USER, json={
        "name": "data.bin", "content_b64": base64.b64encode(b"\x00\x01").decode(),
    }).json()["file_id"]

    # Agents may pull a file only while one of their runs references it.
    resp = http.get(f"/api/v1/files/{file_id}/content",
                    headers=AGENT, params={"client_id": client_id})
    assert resp.status_code == 403
    http.post("/api/v1/requests", headers=USER, json={
        "domain_id": domain_id, "process_id": process_id,
        "room_ids": [room_id], "shared_file_ids": [file_id],
    })
    manager.scheduler_tick()
    resp = http.get(f"/api/v1/files/{file_id}/content",
                    headers=AGENT, params={"client_id": client_id})
    assert resp.status_code == 200 and resp.content == b"\x00\x01"


def test_cancellation_notices_flow_through_rest(rig):
    http, manager, _ = rig
    client_id = _register_agent(http)
    room_id, domain_id, process_id = _seed_catalog(http, client_id)
    request_id = http.post("/api/v1/requests", headers=USER, json={
        "domain_id": domain_id, "process_id": process_id, "room_ids": [room_id],
    }).json()["request_id"]
    manager.scheduler_tick()

    assert http.post(f"/api/v1/requests/{request_id}/cancel",
                     headers=USER).status_code == 200
    notices = http.get(f"/api/v1/clients/{client_id}/cancellations",
                       headers=AGENT).json()["cancellations"]
    assert len(notices) == 1
    assert http.post(f"/api/v1/clients/{client_id}/cancellations/ack",
                     headers=AGENT,
                     json={"notice_ids": [notices[0]["notice_id"]]}).status_code == 200
    assert http.get(f"/api/v1/clients/{client_id}/cancellations",
                    headers=AGENT).json()["cancellations"] == []
    # A second cancel and a stale result both map to 409.
    assert http.post(f"/api/v1/requests/{request_id}/cancel",
                     headers=USER).status_code == 409
    run_id = notices[0]["run_id"]
    resp = http.post(f"/api/v1/clients/{client_id}/runs/{run_id}/result",
                     headers=AGENT, json={"outcome": "succeeded"})
    assert resp.status_code == 409


def test_barrier_endpoint_holds_then_releases(rig):
    http, manager, gateway = rig
    client_id = _register_agent(http)
    room_id, domain_id, process_id = _seed_catalog(http, client_id)
    request_id = http.post("/api/v1/requests", headers=USER, json={
        "domain_id": domain_id, "process_id": process_id,
        "repetitions": 2, "parallel": True, "room_ids": [room_id],
    }).json()["request_id"]

    assert http.get(f"/api/v1/barrier/{request_id}",
                    headers=AGENT).json() == {"release": False}
    manager.scheduler_tick()
    answer = http.get(f"/api/v1/barrier/{request_id}", headers=AGENT).json()
    assert answer["release"] is True and answer["master_port"] == 43210


def test_clients_listing_reflects_heartbeat(rig):
    http, _, _ = rig
    client_id = _register_agent(http)
    clients = http.get("/api/v1/clients", headers=USER).json()["clients"]
    assert clients[0]["client_id"] == client_id
    assert clients[0]["availability"] == "available"
    assert clients[0]["snapshot"]["cpu_pct"] == 10.0
    assert clients[0]["active_runs"] == 0


def test_domain_approval_flow_over_rest(rig):
    http, _, _ = rig
    domain_id = http.post("/api/v1/domains", headers=USER, json={
        "name": "contrib", "build_recipe": "base: python3",
        "dependency_manifest": "", "store": True,
    }).json()["domain_id"]
    names = lambda headers: [
        d["domain_id"] for d in
        http.get("/api/v1/domains", headers=headers).json()["domains"]
    ]
    assert domain_id in names(USER) and domain_id not in names(OTHER)
    assert http.post(f"/api/v1/domains/{domain_id}/approve", headers=ADMIN,
                     json={"approved": True}).status_code == 200
    assert domain_id in names(OTHER)
