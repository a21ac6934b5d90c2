"""REST surface for the manager, versioned under /api/v1.

Thin translation layer: parse the body, authenticate the bearer token, call
one Manager method, map domain errors onto status codes. Payload and bundle
bytes travel base64-encoded inside JSON; archives download as octet streams.
"""

from __future__ import annotations

import base64
import os

from fastapi import Depends, FastAPI, Header, Request as HttpRequest, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from gridforge.errors import (
    AlreadyTerminal,
    Forbidden,
    GridForgeError,
    NotParallel,
    NotReady,
    StaleAttempt,
    UnknownEntity,
    ValidationError,
)
from gridforge.manager.config import TokenInfo
from gridforge.manager.core import Manager
from gridforge.model import ClientConfig, ResourceSnapshot
from gridforge.serialization import from_wire

_STATUS_BY_ERROR = [
    (ValidationError, 422),
    (Forbidden, 403),
    (UnknownEntity, 404),
    (AlreadyTerminal, 409),
    (StaleAttempt, 409),
    (NotParallel, 409),
    (NotReady, 409),
]


def _error_response(exc: GridForgeError) -> JSONResponse:
    for kind, status in _STATUS_BY_ERROR:
        if isinstance(exc, kind):
            body = {"error": kind.__name__, "detail": str(exc)}
            if isinstance(exc, ValidationError):
                body["fields"] = exc.fields
            return JSONResponse(status_code=status, content=body)
    return JSONResponse(status_code=500, content={"error": "Internal", "detail": str(exc)})


def create_app(manager: Manager) -> FastAPI:
    app = FastAPI(title="gridforge manager", docs_url=None, redoc_url=None)

    @app.exception_handler(GridForgeError)
    async def _handle_domain_error(_request: HttpRequest, exc: GridForgeError):
        return _error_response(exc)

    def caller(authorization: str | None = Header(default=None)) -> TokenInfo:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:]
        return manager.authenticate(token)

    def agent_caller(info: TokenInfo = Depends(caller)) -> TokenInfo:
        if not (info.agent or info.admin):
            raise Forbidden("agent credentials required")
        return info

    def admin_caller(info: TokenInfo = Depends(caller)) -> TokenInfo:
        if not info.admin:
            raise Forbidden("admin credentials required")
        return info

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    # -- agent-facing ------------------------------------------------------

    @app.post("/api/v1/clients/register")
    def register(body: dict, _info: TokenInfo = Depends(agent_caller)):
        client_id = manager.register_client(
            agent_key=body["agent_key"],
            host=body["host"],
            port=int(body["port"]),
            has_gpu=bool(body.get("has_gpu", False)),
            cores=int(body.get("cores", 1)),
            ram_mb=int(body.get("ram_mb", 1024)),
            config=from_wire(ClientConfig, body.get("config", {})),
        )
        return {"client_id": client_id}

    @app.post("/api/v1/clients/{client_id}/heartbeat")
    def heartbeat(client_id: int, body: dict, _info: TokenInfo = Depends(agent_caller)):
        manager.heartbeat(
            client_id,
            from_wire(ResourceSnapshot, body.get("snapshot", {})),
            bool(body.get("accepting_new", True)),
        )
        return {"ok": True}

    @app.get("/api/v1/clients/{client_id}/cancellations")
    def cancellations(client_id: int, _info: TokenInfo = Depends(agent_caller)):
        return {"cancellations": manager.poll_cancellations(client_id)}

    @app.post("/api/v1/clients/{client_id}/cancellations/ack")
    def ack_cancellations(client_id: int, body: dict,
                          _info: TokenInfo = Depends(agent_caller)):
        manager.ack_cancellations(client_id, [int(n) for n in body.get("notice_ids", [])])
        return {"ok": True}

    @app.post("/api/v1/clients/{client_id}/runs/{run_id}/status")
    def run_status(client_id: int, run_id: int, body: dict,
                   _info: TokenInfo = Depends(agent_caller)):
        manager.record_run_status(
            client_id, run_id, body["event"], body.get("obs", "")
        )
        return {"ok": True}

    @app.post("/api/v1/clients/{client_id}/runs/{run_id}/result")
    def run_result(client_id: int, run_id: int, body: dict,
                   _info: TokenInfo = Depends(agent_caller)):
        bundle = base64.b64decode(body["bundle_b64"]) if body.get("bundle_b64") else None
        console = base64.b64decode(body["console_b64"]) if body.get("console_b64") else None
        manager.record_run_result(
            client_id, run_id,
            outcome=body["outcome"],
            exit_code=body.get("exit_code"),
            obs=body.get("obs", ""),
            bundle=bundle,
            console=console,
        )
        return {"ok": True}

    @app.post("/api/v1/clients/{client_id}/runs/{run_id}/progress")
    def run_progress(client_id: int, run_id: int, body: dict,
                     _info: TokenInfo = Depends(agent_caller)):
        manager.record_progress(
            client_id, run_id, float(body.get("percent", 0.0)),
            str(body.get("message", "")),
        )
        return {"ok": True}

    @app.get("/api/v1/domains/{domain_id}/spec")
    def domain_spec(domain_id: int, _info: TokenInfo = Depends(agent_caller)):
        return manager.serve_domain_spec(domain_id)

    @app.get("/api/v1/processes/{process_id}/payload")
    def process_payload(process_id: int, _info: TokenInfo = Depends(agent_caller)):
        payload = manager.repo.get_process_payload(process_id)
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/api/v1/files/{file_id}/content")
    def file_content(file_id: int, client_id: int,
                     _info: TokenInfo = Depends(agent_caller)):
        content = manager.serve_shared_file(client_id, file_id)
        return Response(content=content, media_type="application/octet-stream")

    @app.get("/api/v1/barrier/{request_id}")
    def barrier(request_id: int, _info: TokenInfo = Depends(agent_caller)):
        return manager.barrier_poll(request_id)

    # -- user-facing -------------------------------------------------------

    @app.get("/api/v1/me")
    def whoami(info: TokenInfo = Depends(caller)):
        return {"user": info.user, "admin": info.admin}

    @app.get("/api/v1/clients")
    def list_clients(_info: TokenInfo = Depends(caller)):
        return {"clients": manager.list_clients()}

    @app.post("/api/v1/rooms")
    def create_room(body: dict, info: TokenInfo = Depends(caller)):
        room_id = manager.create_room(
            info, body["name"], body.get("visibility", "public"),
            body.get("member_users"),
        )
        return {"room_id": room_id}

    @app.get("/api/v1/rooms")
    def list_rooms(_info: TokenInfo = Depends(caller)):
        return {"rooms": [
            {
                "room_id": room.room_id,
                "name": room.name,
                "owner_user": room.owner_user,
                "visibility": room.visibility.value,
                "member_users": sorted(room.member_users),
                "client_ids": sorted(room.client_ids),
            }
            for room in manager.repo.list_rooms()
        ]}

    @app.post("/api/v1/rooms/{room_id}/assign")
    def assign_room(room_id: int, body: dict, info: TokenInfo = Depends(caller)):
        manager.assign_client_to_room(info, int(body["client_id"]), room_id)
        return {"ok": True}

    @app.post("/api/v1/domains")
    def create_domain(body: dict, info: TokenInfo = Depends(caller)):
        domain_id = manager.create_domain(
            info, body["name"], body.get("build_recipe", ""),
            body.get("dependency_manifest", ""), bool(body.get("store", False)),
        )
        return {"domain_id": domain_id}

    @app.get("/api/v1/domains")
    def list_domains(info: TokenInfo = Depends(caller)):
        return {"domains": [
            {
                "domain_id": d.domain_id,
                "name": d.name,
                "origin": d.origin.value,
                "approved": d.approved,
                "owner_user": d.owner_user,
                "content_hash": d.content_hash,
            }
            for d in manager.list_domains(info)
        ]}

    @app.post("/api/v1/domains/{domain_id}/approve")
    def approve_domain(domain_id: int, body: dict,
                       info: TokenInfo = Depends(admin_caller)):
        manager.approve_domain(info, domain_id, bool(body.get("approved", True)))
        return {"ok": True}

    @app.post("/api/v1/processes")
    def create_process(body: dict, info: TokenInfo = Depends(caller)):
        process_id = manager.create_process(
            info, body["name"], body["entry_command"],
            body.get("payload_kind", "single"), body.get("payload_filename", ""),
            base64.b64decode(body["payload_b64"]),
        )
        return {"process_id": process_id}

    @app.get("/api/v1/processes")
    def list_processes(_info: TokenInfo = Depends(caller)):
        return {"processes": [
            {
                "process_id": p.process_id,
                "name": p.name,
                "owner_user": p.owner_user,
                "entry_command": p.entry_command,
                "payload_kind": p.payload_kind.value,
                "payload_filename": p.payload_filename,
                "payload_size": p.payload_size,
            }
            for p in manager.repo.list_processes()
        ]}

    @app.post("/api/v1/files")
    def upload_file(body: dict, info: TokenInfo = Depends(caller)):
        file_id = manager.upload_file(
            info, body["name"], base64.b64decode(body["content_b64"])
        )
        return {"file_id": file_id}

    @app.get("/api/v1/files")
    def list_files(_info: TokenInfo = Depends(caller)):
        return {"files": [
            {
                "file_id": f.file_id,
                "name": f.name,
                "size_bytes": f.size_bytes,
                "content_hash": f.content_hash,
                "owner_user": f.owner_user,
            }
            for f in manager.repo.list_files()
        ]}

    @app.post("/api/v1/requests")
    def submit_request(body: dict, info: TokenInfo = Depends(caller)):
        return {"request_id": manager.submit_request(info, body)}

    @app.get("/api/v1/requests")
    def list_requests(info: TokenInfo = Depends(caller)):
        return {"requests": manager.list_requests(info)}

    @app.get("/api/v1/requests/{request_id}")
    def request_detail(request_id: int, info: TokenInfo = Depends(caller)):
        return manager.get_request_view(info, request_id)

    @app.post("/api/v1/requests/{request_id}/cancel")
    def cancel_request(request_id: int, info: TokenInfo = Depends(caller)):
        manager.cancel_request(info, request_id)
        return {"ok": True}

    @app.get("/api/v1/requests/{request_id}/bundle")
    def request_bundle(request_id: int, info: TokenInfo = Depends(caller)):
        archive = manager.get_request_bundle(info, request_id)
        return Response(content=archive, media_type="application/zip")

    @app.get("/api/v1/runs/{run_id}/bundle")
    def run_bundle(run_id: int, info: TokenInfo = Depends(caller)):
        archive = manager.get_run_bundle(info, run_id)
        return Response(content=archive, media_type="application/zip")

    ui_dir = manager.config.ui_dir
    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
