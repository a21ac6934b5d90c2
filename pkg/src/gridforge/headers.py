"""Rendering and parsing of the command-line run header.

Every instance of user code is launched as `entry_command + render_header_args(header)`.
`parse_run_header` is the Python-side counterpart: it reads those flags with
defaults, so code that embeds it still runs unchanged outside the platform.
"""

from __future__ import annotations

import sys

from gridforge.model import RunHeader

# Fixed flag order; a header renders to the same byte-identical vector every time.
HEADER_FLAGS = (
    "app_dir",
    "checkpoint_dir",
    "output_dir",
    "rank",
    "repetitions",
    "master_addr",
    "master_port",
    "parameters",
)


def render_header_args(header: RunHeader) -> list[str]:
    """Serialize a header to its argument vector.

    Order is fixed, numbers are rendered in decimal, and the parameter list
    becomes one comma-joined token (empty string when there are none).
    """
    header.validate()
    values = {
        "app_dir": header.app_dir,
        "checkpoint_dir": header.checkpoint_dir,
        "output_dir": header.output_dir,
        "rank": str(header.rank),
        "repetitions": str(header.repetitions),
        "master_addr": header.master_addr,
        "master_port": str(header.master_port),
        "parameters": ",".join(header.parameters),
    }
    argv: list[str] = []
    for flag in HEADER_FLAGS:
        argv.append(f"--{flag}")
        argv.append(values[flag])
    return argv


_HEADER_DEFAULTS = {
    "app_dir": ".",
    "checkpoint_dir": "./checkpoint",
    "output_dir": "./output",
    "rank": "0",
    "repetitions": "1",
    "master_addr": "127.0.0.1",
    "master_port": "0",
    "parameters": "",
}


def parse_run_header(argv: list[str] | None = None) -> RunHeader:
    """Parse header flags from argv (default sys.argv), tolerating extras.

    Defaults are standalone-friendly: rank 0 of 1, dot-relative directories,
    no parameters. Unknown arguments are ignored so user code keeps its own
    flags.

    A plain token scanner rather than argparse: flag values may start with a
    dash (negative numeric parameters), which argparse rejects as ambiguous.
    """
    if argv is None:
        argv = sys.argv[1:]
    values = dict(_HEADER_DEFAULTS)
    i = 0
    while i < len(argv):
        token = argv[i]
        name = token[2:] if token.startswith("--") else None
        if name in values and i + 1 < len(argv):
            values[name] = argv[i + 1]
            i += 2
        else:
            i += 1
    return RunHeader(
        app_dir=values["app_dir"],
        checkpoint_dir=values["checkpoint_dir"],
        output_dir=values["output_dir"],
        rank=int(values["rank"]),
        repetitions=int(values["repetitions"]),
        master_addr=values["master_addr"],
        master_port=int(values["master_port"]),
        parameters=[p for p in values["parameters"].split(",") if p != ""],
    )


# Self-contained snippet users can paste at the top of a single-file payload
# instead of importing gridforge. Kept in sync with parse_run_header.
PYTHON_HEADER_SNIPPET = '''\
import sys

_defaults = {"app_dir": ".", "checkpoint_dir": "./checkpoint", "output_dir": "./output",
             "rank": "0", "repetitions": "1", "master_addr": "127.0.0.1",
             "master_port": "0", "parameters": ""}
_argv, _i = sys.argv[1:], 0
while _i < len(_argv):
    _name = _argv[_i][2:] if _argv[_i].startswith("--") else None
    if _name in _defaults and _i + 1 < len(_argv):
        _defaults[_name] = _argv[_i + 1]
        _i += 2
    else:
        _i += 1
APP_DIR, CHECKPOINT_DIR, OUTPUT_DIR = _defaults["app_dir"], _defaults["checkpoint_dir"], _defaults["output_dir"]
RANK, REPETITIONS = int(_defaults["rank"]), int(_defaults["repetitions"])
MASTER_ADDR, MASTER_PORT = _defaults["master_addr"], int(_defaults["master_port"])
PARAMETERS = [x for x in _defaults["parameters"].split(",") if x != ""]
'''
