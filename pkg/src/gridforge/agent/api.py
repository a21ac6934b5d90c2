"""Agent-local REST surface.

The manager calls /ping, /runs, and /runs/{id}; user-code wrappers call
/progress/{id}. When the agent is partitioned (fault injection) every route
answers 503, so from the manager's side the machine has dropped off the
network while local executions continue untouched.
"""

from __future__ import annotations

from fastapi import FastAPI, Request as HttpRequest
from fastapi.responses import JSONResponse

from gridforge.agent.core import ClientAgent


def create_agent_app(agent: ClientAgent) -> FastAPI:
    app = FastAPI(title="gridforge agent", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def _partition_gate(request: HttpRequest, call_next):
        if agent.partitioned:
            return JSONResponse(status_code=503, content={"error": "unavailable"})
        return await call_next(request)

    @app.get("/ping")
    def ping():
        return {"ok": True, "client_id": agent.client_id}

    @app.post("/runs")
    def dispatch(envelope: dict):
        return agent.accept_run(envelope)

    @app.get("/runs/{run_id}")
    def run_info(run_id: int):
        info = agent.run_info(run_id)
        if info is None:
            return JSONResponse(status_code=404, content={"known": False})
        return info

    @app.post("/progress/{run_id}")
    def progress(run_id: int, body: dict):
        agent.relay_progress(
            run_id, float(body.get("percent", 0.0)), str(body.get("message", ""))
        )
        return {"ok": True}

    return app
