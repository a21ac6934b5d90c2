"""Run a client agent: `gridforge-agent --config agent.yaml`."""

from __future__ import annotations

import argparse
import logging
import socket

import uvicorn

from gridforge.agent.api import create_agent_app
from gridforge.agent.config import load_agent_config
from gridforge.agent.core import ClientAgent


def _pick_port(host: str) -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, 0))
        return sock.getsockname()[1]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="gridforge client agent")
    parser.add_argument("--config", default=None, help="YAML config file")
    parser.add_argument("--manager-url", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--workdir", default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO)
    config = load_agent_config(args.config)
    if args.manager_url:
        config.manager_url = args.manager_url
    if args.port is not None:
        config.port = args.port
    if args.workdir:
        config.workdir_root = args.workdir
    if config.port == 0:
        config.port = _pick_port(config.host)
    if not config.agent_key:
        config.agent_key = f"{socket.gethostname()}:{config.port}"

    agent = ClientAgent(config)
    agent.start()
    try:
        uvicorn.run(create_agent_app(agent), host=config.host, port=config.port,
                    log_level="warning")
    finally:
        agent.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
