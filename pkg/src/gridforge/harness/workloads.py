"""Single-file Python payloads used by simulation scenarios.

Each source embeds the standalone header scanner, so the same file runs
unchanged on a developer laptop (`python3 main.py`) and inside a sandbox or
container. Sleep-based workloads honor GF_SPEED_FACTOR so a single host can
emulate a fleet of machines with different speeds: factor 2.0 means the host
finishes the same nominal work in half the wall time.
"""

from __future__ import annotations

import textwrap

from gridforge.headers import PYTHON_HEADER_SNIPPET


def _src(body: str) -> str:
    return PYTHON_HEADER_SNIPPET + textwrap.dedent(body)


# Prints identity, writes one file per rank. Parameters pass through verbatim.
PRINT_BASIC = _src('''
    import os

    print("rank %d of %d params=%s" % (RANK, REPETITIONS, ",".join(PARAMETERS)))
    with open(os.path.join(OUTPUT_DIR, "rank_%d.txt" % RANK), "w") as fh:
        fh.write("rank %d done\\n" % RANK)
''')


# Sleeps parameters[0] nominal seconds (default 1.0) parameters[1] times
# (default once), scaled by the host's speed factor. The speedup experiment
# compares one rank looping K times against K single-loop ranks on a fleet.
SLEEP_PER_RANK = _src('''
    import os
    import time

    nominal = float(PARAMETERS[0]) if PARAMETERS else 1.0
    loops = int(PARAMETERS[1]) if len(PARAMETERS) > 1 else 1
    speed = float(os.environ.get("GF_SPEED_FACTOR", "1") or 1)
    for _ in range(loops):
        time.sleep(nominal / speed)
    with open(os.path.join(OUTPUT_DIR, "rank_%d.txt" % RANK), "w") as fh:
        fh.write("slept %.3f nominal x%d\\n" % (nominal, loops))
''')


# Runs "forever" in short increments so cancellation lands promptly.
SLEEP_LOOP = _src('''
    import os
    import time

    total = float(PARAMETERS[0]) if PARAMETERS else 300.0
    speed = float(os.environ.get("GF_SPEED_FACTOR", "1") or 1)
    deadline = time.time() + total / speed
    while time.time() < deadline:
        time.sleep(0.05)
    with open(os.path.join(OUTPUT_DIR, "rank_%d.txt" % RANK), "w") as fh:
        fh.write("ran to completion\\n")
''')


# Exits with parameters[0] (default 1) without producing output files.
EXIT_WITH_CODE = _src('''
    import sys as _sys

    code = int(PARAMETERS[0]) if PARAMETERS else 1
    print("exiting with", code)
    _sys.exit(code)
''')


# parameters[0] steps (default 10); each step is checkpointed. With
# parameters[1] == "crash" the process kills itself once at the halfway
# step, so a restart must resume from the checkpoint rather than step 0.
CHECKPOINT_STEPS = _src('''
    import json
    import os
    import time

    steps = int(PARAMETERS[0]) if PARAMETERS else 10
    crash_once = len(PARAMETERS) > 1 and PARAMETERS[1] == "crash"
    state_path = os.path.join(CHECKPOINT_DIR, "state.json")
    marker_path = os.path.join(CHECKPOINT_DIR, "crashed_once")

    start = 0
    if os.path.exists(state_path):
        with open(state_path) as fh:
            start = json.load(fh)["next"]
    log_path = os.path.join(OUTPUT_DIR, "steps.txt")
    speed = float(os.environ.get("GF_SPEED_FACTOR", "1") or 1)
    for step in range(start, steps):
        if crash_once and step == steps // 2 and not os.path.exists(marker_path):
            with open(marker_path, "w") as fh:
                fh.write("1")
            os._exit(7)
        time.sleep(0.02 / speed)
        with open(log_path, "a") as fh:
            fh.write("step %d\\n" % step)
        tmp = state_path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump({"next": step + 1}, fh)
        os.replace(tmp, state_path)
    with open(os.path.join(OUTPUT_DIR, "resumed_from.txt"), "w") as fh:
        fh.write("%d\\n" % start)
''')


# Rank 0 binds the advertised master port and echoes each peer's rank back;
# other ranks connect to MASTER_ADDR:MASTER_PORT with retries. Proves that
# the barrier released with usable rendezvous coordinates.
RENDEZVOUS_ECHO = _src('''
    import os
    import socket
    import time

    def _out(name, text):
        with open(os.path.join(OUTPUT_DIR, name), "w") as fh:
            fh.write(text)

    if RANK == 0:
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind(("0.0.0.0", MASTER_PORT))
        server.listen(REPETITIONS)
        server.settimeout(30.0)
        seen = set()
        while len(seen) < REPETITIONS - 1:
            conn, _ = server.accept()
            data = conn.recv(64).decode().strip()
            seen.add(int(data))
            conn.sendall(("ack %s\\n" % data).encode())
            conn.close()
        server.close()
        _out("master.txt", "peers=%s\\n" % ",".join(str(r) for r in sorted(seen)))
    else:
        reply = ""
        for _ in range(120):
            try:
                with socket.create_connection((MASTER_ADDR, MASTER_PORT), 2.0) as c:
                    c.sendall(("%d\\n" % RANK).encode())
                    reply = c.recv(64).decode().strip()
                break
            except OSError:
                time.sleep(0.25)
        if not reply:
            raise SystemExit("never reached master at %s:%d" % (MASTER_ADDR, MASTER_PORT))
        _out("rank_%d.txt" % RANK, reply + "\\n")
''')


# Reads every file named in parameters from the app directory, proves the
# read-only staging binds by attempting a write, and records the contents.
SHARED_READER = _src('''
    import hashlib
    import os

    report = []
    for name in PARAMETERS:
        path = os.path.join(APP_DIR, name)
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        try:
            with open(path, "a"):
                pass
            writable = True
        except PermissionError:
            writable = False
        report.append("%s sha256=%s writable=%s" % (name, digest, writable))
    with open(os.path.join(OUTPUT_DIR, "shared_report_%d.txt" % RANK), "w") as fh:
        fh.write("\\n".join(report) + "\\n")
''')


# Posts percent/message progress updates to the local agent relay.
PROGRESS_REPORTER = _src('''
    import json
    import os
    import time
    import urllib.request

    url = os.environ.get("GF_PROGRESS_URL", "")
    speed = float(os.environ.get("GF_SPEED_FACTOR", "1") or 1)
    for i in range(5):
        if url:
            body = json.dumps({"percent": i * 25.0, "message": "step %d" % i})
            req = urllib.request.Request(
                url, data=body.encode(),
                headers={"Content-Type": "application/json"},
            )
            try:
                urllib.request.urlopen(req, timeout=5).read()
            except OSError:
                pass
        time.sleep(0.05 / speed)
    with open(os.path.join(OUTPUT_DIR, "progress_done.txt"), "w") as fh:
        fh.write("posted\\n")
''')


# Records the resource allocation the executor granted, as seen from inside
# the process: GF_CPU_SHARE is stamped into the child environment at launch.
ENV_PROBE = _src('''
    import os

    share = os.environ.get("GF_CPU_SHARE", "")
    print("rank %d cpu_share=%s" % (RANK, share))
    with open(os.path.join(OUTPUT_DIR, "share_%d.txt" % RANK), "w") as fh:
        fh.write(share + "\\n")
''')


WORKLOADS: dict[str, str] = {
    "print_basic": PRINT_BASIC,
    "env_probe": ENV_PROBE,
    "sleep_per_rank": SLEEP_PER_RANK,
    "sleep_loop": SLEEP_LOOP,
    "exit_with_code": EXIT_WITH_CODE,
    "checkpoint_steps": CHECKPOINT_STEPS,
    "rendezvous_echo": RENDEZVOUS_ECHO,
    "shared_reader": SHARED_READER,
    "progress_reporter": PROGRESS_REPORTER,
}


def workload_source(name: str) -> bytes:
    try:
        return WORKLOADS[name].encode()
    except KeyError:
        raise KeyError(f"unknown workload {name!r}; have {sorted(WORKLOADS)}")
