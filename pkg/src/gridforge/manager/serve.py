"""Run the manager service: `gridforge-manager --config manager.yaml`."""

from __future__ import annotations

import argparse
import logging

import uvicorn

from gridforge.manager.api import create_app
from gridforge.manager.config import load_manager_config
from gridforge.manager.core import Manager
from gridforge.manager.monitors import Monitors
from gridforge.repository import Repository


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="gridforge manager service")
    parser.add_argument("--config", default=None, help="YAML config file")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO)
    config = load_manager_config(args.config)
    if args.host:
        config.host = args.host
    if args.port is not None:
        config.port = args.port

    repo = Repository(config.db_path)
    manager = Manager(config, repo)
    monitors = Monitors(manager)
    monitors.start()
    try:
        uvicorn.run(create_app(manager), host=config.host, port=config.port,
                    log_level="warning")
    finally:
        monitors.stop()
        manager.close()
        repo.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
