import io
import zipfile

import pytest
from hypothesis import given, settings, strategies as st

from gridforge.errors import (
    AlreadyTerminal,
    Forbidden,
    NotParallel,
    NotReady,
    StaleAttempt,
    ValidationError,
)
from gridforge.manager.config import ManagerConfig, TokenInfo
from gridforge.manager.core import Manager
from gridforge.model import (
    Availability,
    ClientConfig,
    PayloadKind,
    Request,
    RequestStatus,
    ResourceSnapshot,
    RunStatus,
)
from gridforge.repository import ClientRow, Repository

from fakes import FakeGateway


def _tiny_zip(console: bytes = b"ok\n") -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("output.txt", console)
    return buf.getvalue()


ALICE = TokenInfo(user="alice")
BOB = TokenInfo(user="bob")
ADMIN = TokenInfo(user="root", admin=True)


@pytest.fixture()
def rig():
    repo = Repository()
    config = ManagerConfig(
        db_path=":memory:",
        tokens={"t-alice": ALICE, "t-admin": ADMIN},
        retry_cap=5,
        missed_ping_threshold=3,
    )
    gateway = FakeGateway()
    clock = {"now": 1000.0}
    manager = Manager(
        config, repo, gateway=gateway, clock=lambda: clock["now"]
    )
    yield manager, gateway, clock
    repo.close()


def _seed_catalog(manager, clients=4, slots=3, room_name="Public", gpus=()):
    room_id = manager.create_room(ADMIN, room_name)
    client_ids = []
    for i in range(clients):
        cid = manager.register_client(
            f"agent-{room_name}-{i}", "127.0.0.1", 9100 + i,
            has_gpu=i in gpus, cores=4, ram_mb=2048,
            config=ClientConfig(max_concurrent_runs=slots),
        )
        manager.assign_client_to_room(ADMIN, cid, room_id)
        manager.heartbeat(cid, ResourceSnapshot(cpu_pct=5.0), accepting_new=True)
        client_ids.append(cid)
    domain_id = manager.create_domain(ALICE, f"dom-{room_name}", "base: python3", "")
    process_id = manager.create_process(
        ALICE, f"proc-{room_name}", "python3 main.py", "single", "main.py",
        b"print('hi')",
    )
    return room_id, client_ids, domain_id, process_id


def _spec(domain_id, process_id, room_id, **extra):
    return {"domain_id": domain_id, "process_id": process_id,
            "room_ids": [room_id], **extra}


def _submit(manager, domain_id, process_id, room_id, caller=ALICE, **extra):
    return manager.submit_request(
        caller, _spec(domain_id, process_id, room_id, **extra)
    )


def test_register_is_idempotent_and_reannounce_updates(rig):
    manager, _, _ = rig
    cid1 = manager.register_client("k1", "127.0.0.1", 9000, False, 2, 512, ClientConfig())
    cid2 = manager.register_client("k1", "127.0.0.1", 9001, True, 4, 1024, ClientConfig())
    assert cid1 == cid2
    view = manager.list_clients()[0]
    assert view["address"] == "127.0.0.1:9001" and view["has_gpu"]
    assert view["room_id"] is None


def test_fresh_clients_receive_no_work(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    lone = manager.register_client("roomless", "127.0.0.1", 9999, False, 2, 512,
                                   ClientConfig())
    manager.heartbeat(lone, ResourceSnapshot(), accepting_new=True)
    _submit(manager, dom, proc, room_id, repetitions=6)
    manager.scheduler_tick()
    assert all(cid != lone for cid, _ in gateway.dispatches)


def test_room_placement_requires_admin_for_fresh_clients(rig):
    manager, _, _ = rig
    cid = manager.register_client("k", "127.0.0.1", 9000, False, 2, 512, ClientConfig())
    alice_room = manager.create_room(ALICE, "mine")
    with pytest.raises(Forbidden):
        manager.assign_client_to_room(ALICE, cid, alice_room)
    manager.assign_client_to_room(ADMIN, cid, alice_room)
    other = manager.create_room(ALICE, "mine-too")
    manager.assign_client_to_room(ALICE, cid, other)  # owns both rooms now
    with pytest.raises(Forbidden):
        manager.assign_client_to_room(BOB, cid, other)


def test_submit_creates_pending_runs_and_validation_passthrough(rig):
    manager, _, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager)
    rid = _submit(manager, dom, proc, room_id, repetitions=10)
    runs = manager.repo.runs_for_request(rid)
    assert [r.rank for r in runs] == list(range(10))
    assert all(r.status_code == RunStatus.PENDING for r in runs)
    with pytest.raises(ValidationError) as err:
        _submit(manager, 424242, proc, room_id)
    assert "domain_id" in err.value.fields


def test_scheduler_distributes_across_clients(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=4, slots=3)
    rid = _submit(manager, dom, proc, room_id, repetitions=10)
    dispatched = manager.scheduler_tick()
    assert len(dispatched) == 10
    per_client = {}
    for cid, env in gateway.dispatches:
        per_client[cid] = per_client.get(cid, 0) + 1
    assert set(per_client) == set(clients)
    assert max(per_client.values()) <= 3
    assert manager.repo.get_request(rid).status == RequestStatus.RUNNING


def test_gpu_filter_leaves_request_queued(rig):
    manager, gateway, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=3, gpus=())
    rid = _submit(manager, dom, proc, room_id, needs_gpu=True)
    assert manager.scheduler_tick() == []
    assert manager.repo.get_request(rid).status == RequestStatus.QUEUED
    assert gateway.dispatches == []


def test_gpu_requests_land_only_on_gpu_clients(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=3, gpus=(2,))
    _submit(manager, dom, proc, room_id, repetitions=3, needs_gpu=True)
    manager.scheduler_tick()
    gpu_client = clients[2]
    assert {cid for cid, _ in gateway.dispatches} == {gpu_client}


def test_fifo_per_user_head_before_later_requests(rig):
    manager, gateway, _ = rig
    # One client, one slot: the first request cannot fully dispatch in one
    # tick, so the second must wait.
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1, slots=1)
    first = _submit(manager, dom, proc, room_id, repetitions=3)
    second = _submit(manager, dom, proc, room_id, repetitions=1)
    manager.scheduler_tick()
    assert [env["request_id"] for _, env in gateway.dispatches] == [first]
    # Finish the dispatched rank, freeing the slot.
    run = next(r for r in manager.repo.runs_for_request(first)
               if r.status_code == RunStatus.DISTRIBUTED)
    manager.record_run_status(run.client_id, run.run_id, "started")
    manager.record_run_result(run.client_id, run.run_id, "succeeded", bundle=_tiny_zip(),
                              console=b"")
    manager.scheduler_tick()
    assert all(env["request_id"] == first for _, env in gateway.dispatches)
    assert manager.repo.get_request(second).status == RequestStatus.QUEUED


def test_two_users_are_serviced_in_one_tick(rig):
    manager, gateway, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=2, slots=2)
    _submit(manager, dom, proc, room_id, caller=ALICE, repetitions=2)
    _submit(manager, dom, proc, room_id, caller=BOB, repetitions=2)
    manager.scheduler_tick()
    users = {env["request_id"] for _, env in gateway.dispatches}
    assert len(users) == 2


def test_refusing_client_leaves_run_pending(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    gateway.refusing[clients[0]] = "threshold"
    rid = _submit(manager, dom, proc, room_id)
    assert manager.scheduler_tick() == []
    run = manager.repo.runs_for_request(rid)[0]
    assert run.status_code == RunStatus.PENDING
    assert "threshold" in run.obs


def test_same_machine_lands_all_ranks_on_one_client(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=3, slots=4)
    _submit(manager, dom, proc, room_id, repetitions=3, same_machine=True)
    manager.scheduler_tick()
    assert len({cid for cid, _ in gateway.dispatches}) == 1
    assert len(gateway.dispatches) == 3


def test_same_machine_over_capacity_rejected_at_validation(rig):
    manager, _, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=3, slots=2)
    with pytest.raises(ValidationError):
        _submit(manager, dom, proc, room_id, repetitions=3, same_machine=True)


def _drive_to_success(manager, rid, console=b"ok\n"):
    manager.scheduler_tick()
    for run in manager.repo.runs_for_request(rid):
        if run.status_code != RunStatus.DISTRIBUTED:
            continue
        manager.record_run_status(run.client_id, run.run_id, "started")
        payload = io.BytesIO()
        with zipfile.ZipFile(payload, "w") as zf:
            zf.writestr("output.txt", console)
        manager.record_run_result(
            run.client_id, run.run_id, "succeeded",
            bundle=payload.getvalue(), console=console,
        )


def test_completion_materializes_ordered_archive(rig):
    manager, _, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=4, slots=3)
    rid = _submit(manager, dom, proc, room_id, repetitions=10)
    _drive_to_success(manager, rid)
    request = manager.repo.get_request(rid)
    assert request.status == RequestStatus.COMPLETED
    archive = manager.get_request_bundle(ALICE, rid)
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        names = zf.namelist()
        merged = zf.read("merged_output.txt")
    assert any(n.startswith("rank_9/") for n in names)
    sections = [ln for ln in merged.splitlines() if ln.startswith(b"=====")]
    assert sections == [b"===== rank %d =====" % i for i in range(10)]


def test_bundle_not_ready_while_running(rig):
    manager, _, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=1)
    rid = _submit(manager, dom, proc, room_id)
    with pytest.raises(NotReady):
        manager.get_request_bundle(ALICE, rid)
    with pytest.raises(Forbidden):
        manager.get_request_view(BOB, rid)


def test_liveness_marks_unreachable_after_three_misses(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=2)
    gateway.dead.add(clients[0])
    for expected_missed in (1, 2):
        manager.liveness_tick()
        assert manager.repo.get_client(clients[0]).missed_pings == expected_missed
        assert manager.repo.get_client(clients[0]).availability == Availability.AVAILABLE
    changes = manager.liveness_tick()
    assert {"client_id": clients[0], "now": "unreachable"} in changes
    assert manager.repo.get_client(clients[1]).availability == Availability.AVAILABLE
    # Recovery resets the counter and the availability.
    gateway.dead.clear()
    manager.liveness_tick()
    row = manager.repo.get_client(clients[0])
    assert row.availability == Availability.AVAILABLE and row.missed_pings == 0


def test_restart_hook_fires_when_host_answers(rig):
    manager, gateway, _ = rig
    restarted = []
    manager.host_probe = lambda row: True
    manager.restart_hook = restarted.append
    cid = manager.register_client(
        "k", "127.0.0.1", 9000, False, 2, 512,
        ClientConfig(allow_remote_restart=True),
    )
    gateway.dead.add(cid)
    manager.liveness_tick()
    assert [row.client_id for row in restarted] == [cid]
    manager.liveness_tick()  # only the first miss triggers a restart attempt
    assert len(restarted) == 1


def test_supervision_redistributes_from_dead_client(rig):
    manager, gateway, clock = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=2, slots=2)
    rid = _submit(manager, dom, proc, room_id, repetitions=2)
    manager.scheduler_tick()
    victim = clients[0]
    victim_runs = [r for r in manager.repo.runs_for_request(rid)
                   if r.client_id == victim]
    assert victim_runs
    gateway.dead.add(victim)
    for _ in range(3):
        manager.liveness_tick()
    reassigned = manager.supervision_tick()
    assert set(reassigned) == {r.run_id for r in victim_runs}
    rows = manager.repo.runs_for_request(rid)
    canceled = [r for r in rows if r.status_code == RunStatus.CANCELED]
    assert canceled and all(r.obs == "Canceled" for r in canceled)
    retries = [r for r in rows if r.attempt == 2]
    assert {r.rank for r in retries} == {r.rank for r in victim_runs}
    # The replacement lands on the surviving client and the rank still
    # succeeds exactly once.
    manager.scheduler_tick()
    for run in manager.repo.runs_for_request(rid):
        if run.status_code == RunStatus.DISTRIBUTED:
            manager.record_run_status(run.client_id, run.run_id, "started")
            manager.record_run_result(run.client_id, run.run_id, "succeeded",
                                      bundle=_tiny_zip(), console=b"")
    by_rank = {}
    for run in manager.repo.runs_for_request(rid):
        if run.status_code == RunStatus.SUCCESS:
            by_rank[run.rank] = by_rank.get(run.rank, 0) + 1
    assert by_rank == {0: 1, 1: 1}
    assert manager.repo.get_request(rid).status == RequestStatus.COMPLETED


def test_supervision_orphans_disowned_runs(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    rid = _submit(manager, dom, proc, room_id)
    manager.scheduler_tick()
    run = manager.repo.runs_for_request(rid)[0]
    gateway.unknown_runs.add(run.run_id)
    manager.supervision_tick()
    refreshed = manager.repo.get_run(run.run_id)
    assert refreshed.status_code == RunStatus.ORPHANED
    assert manager.repo.max_attempt(rid, 0) == 2


def test_stale_result_after_reassignment_is_discarded(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=2, slots=2)
    rid = _submit(manager, dom, proc, room_id, repetitions=1)
    manager.scheduler_tick()
    old = manager.repo.runs_for_request(rid)[0]
    gateway.dead.add(old.client_id)
    for _ in range(3):
        manager.liveness_tick()
    manager.supervision_tick()
    gateway.dead.clear()
    with pytest.raises(StaleAttempt):
        manager.record_run_result(old.client_id, old.run_id, "succeeded",
                                  bundle=_tiny_zip(), console=b"")
    # Replacement still completes the request.
    manager.scheduler_tick()
    fresh = [r for r in manager.repo.runs_for_request(rid) if r.attempt == 2][0]
    manager.record_run_status(fresh.client_id, fresh.run_id, "started")
    manager.record_run_result(fresh.client_id, fresh.run_id, "succeeded",
                              bundle=_tiny_zip(), console=b"")
    assert manager.repo.get_request(rid).status == RequestStatus.COMPLETED


def test_retry_cap_fails_the_request(rig):
    manager, gateway, _ = rig
    config_cap = 5
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1, slots=2)
    rid = _submit(manager, dom, proc, room_id, repetitions=1)
    for attempt in range(1, config_cap + 1):
        manager.scheduler_tick()
        run = [r for r in manager.repo.runs_for_request(rid)
               if r.attempt == attempt][0]
        manager.record_run_status(run.client_id, run.run_id, "started")
        manager.record_run_result(run.client_id, run.run_id, "failed", exit_code=9)
    rows = manager.repo.runs_for_request(rid)
    assert manager.repo.get_request(rid).status == RequestStatus.FAILED
    assert len(rows) == config_cap  # no sixth attempt was created
    assert all(r.status_code == RunStatus.FAILED for r in rows)


def test_cancel_request_flips_live_runs_and_queues_notices(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=2, slots=2)
    rid = _submit(manager, dom, proc, room_id, repetitions=4)
    manager.scheduler_tick()
    manager.cancel_request(ALICE, rid)
    rows = manager.repo.runs_for_request(rid)
    assert all(r.status_code == RunStatus.CANCELED for r in rows)
    notices = sum(len(manager.poll_cancellations(c)) for c in clients)
    assert notices == 4
    with pytest.raises(AlreadyTerminal):
        manager.cancel_request(ALICE, rid)
    with pytest.raises(StaleAttempt):
        run = rows[0]
        manager.record_run_result(run.client_id, run.run_id, "succeeded",
                                  bundle=_tiny_zip(), console=b"")


def test_cancel_preserves_succeeded_rows(rig):
    manager, _, _ = rig
    room_id, _, dom, proc = _seed_catalog(manager, clients=2, slots=2)
    rid = _submit(manager, dom, proc, room_id, repetitions=4)
    manager.scheduler_tick()
    runs = manager.repo.runs_for_request(rid)
    for run in runs[:2]:
        manager.record_run_status(run.client_id, run.run_id, "started")
        manager.record_run_result(run.client_id, run.run_id, "succeeded",
                                  bundle=_tiny_zip(), console=b"")
    manager.cancel_request(ALICE, rid)
    rows = manager.repo.runs_for_request(rid)
    assert sum(1 for r in rows if r.status_code == RunStatus.SUCCESS) == 2
    assert sum(1 for r in rows if r.status_code == RunStatus.CANCELED) == 2


def test_barrier_holds_then_releases_sticky(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=3, slots=1)
    seq = _submit(manager, dom, proc, room_id)
    with pytest.raises(NotParallel):
        manager.barrier_poll(seq)
    manager.cancel_request(ALICE, seq)  # keep the FIFO head clear

    rid = _submit(manager, dom, proc, room_id, repetitions=3, parallel=True)
    assert manager.barrier_poll(rid) == {"release": False}
    manager.scheduler_tick()
    answer = manager.barrier_poll(rid)
    assert answer["release"] is True
    assert answer["master_port"] == 43210
    # Rank 0 landed on the least-loaded lowest-id client; its host is the
    # rendezvous address.
    rank0 = next(r for r in manager.repo.runs_for_request(rid) if r.rank == 0)
    assert answer["master_addr"] == manager.repo.get_client(rank0.client_id).host
    assert manager.barrier_poll(rid)["release"] is True


def test_barrier_holds_until_all_ranks_dispatched(rig):
    manager, gateway, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=2, slots=1)
    rid = _submit(manager, dom, proc, room_id, repetitions=3, parallel=True)
    manager.scheduler_tick()  # only 2 slots exist, one rank stays pending
    assert manager.barrier_poll(rid) == {"release": False}


def test_duplicate_status_reports_are_idempotent(rig):
    manager, _, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    rid = _submit(manager, dom, proc, room_id)
    manager.scheduler_tick()
    run = manager.repo.runs_for_request(rid)[0]
    manager.record_run_status(run.client_id, run.run_id, "started")
    manager.record_run_status(run.client_id, run.run_id, "started")
    assert manager.repo.get_run(run.run_id).status_code == RunStatus.RUNNING
    with pytest.raises(StaleAttempt):
        manager.record_run_status(run.client_id + 99, run.run_id, "started")


def test_result_bridges_lost_started_report(rig):
    manager, _, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    rid = _submit(manager, dom, proc, room_id)
    manager.scheduler_tick()
    run = manager.repo.runs_for_request(rid)[0]
    # No "started" report ever arrived (manager was down); result lands anyway.
    manager.record_run_result(run.client_id, run.run_id, "succeeded",
                              bundle=_tiny_zip(), console=b"")
    refreshed = manager.repo.get_run(run.run_id)
    assert refreshed.status_code == RunStatus.SUCCESS
    assert refreshed.started_at is not None


def test_shared_file_serving_requires_live_reference(rig):
    manager, _, _ = rig
    room_id, clients, dom, proc = _seed_catalog(manager, clients=1)
    fid = manager.upload_file(ALICE, "data.bin", b"\x01\x02")
    with pytest.raises(Forbidden):
        manager.serve_shared_file(clients[0], fid)
    rid = _submit(manager, dom, proc, room_id, shared_file_ids=[fid])
    manager.scheduler_tick()
    assert manager.serve_shared_file(clients[0], fid) == b"\x01\x02"
    assert manager.repo.transfer_counts() == {(clients[0], fid): 1}


def test_unapproved_store_domains_hidden_from_others(rig):
    manager, _, _ = rig
    did = manager.create_domain(ALICE, "contrib", "base: python3", "", store=True)
    assert did not in [d.domain_id for d in manager.list_domains(BOB)]
    assert did in [d.domain_id for d in manager.list_domains(ALICE)]
    with pytest.raises(Forbidden):
        manager.approve_domain(ALICE, did, True)
    manager.approve_domain(ADMIN, did, True)
    assert did in [d.domain_id for d in manager.list_domains(BOB)]


# -- select_clients against a brute-force simulation oracle ---------------


def _candidate(client_id, load, spare, room_id=1, gpu=False):
    row = ClientRow(
        client_id=client_id, agent_key=f"k{client_id}", host="127.0.0.1",
        port=9000 + client_id, has_gpu=gpu, cores=4, ram_mb=1024,
        config=ClientConfig(max_concurrent_runs=max(1, load + spare)),
        snapshot=ResourceSnapshot(), availability=Availability.AVAILABLE,
        accepting_new=True, missed_pings=0, last_seen=None,
    )
    return {"row": row, "room_id": room_id, "load": load, "spare": spare}


def _request(repetitions, same_machine=False, needs_gpu=False, rooms={1}):
    return Request(request_id=1, user="u", domain_id=1, process_id=1,
                   repetitions=repetitions, same_machine=same_machine,
                   needs_gpu=needs_gpu, room_ids=set(rooms))


def test_select_clients_matches_worked_example():
    # Loads A:0, B:0, C:2 with three ranks to place: A, B, then A again.
    candidates = [_candidate(1, 0, 4), _candidate(2, 0, 4), _candidate(3, 2, 2)]
    plan = Manager.select_clients(_request(3), candidates, [0, 1, 2])
    assert [(rank, c["row"].client_id) for rank, c in plan] == [(0, 1), (1, 2), (2, 1)]


def test_select_clients_same_machine_capacity():
    candidates = [_candidate(1, 0, 2), _candidate(2, 1, 2)]
    assert Manager.select_clients(_request(3, same_machine=True), candidates,
                                  [0, 1, 2]) == []
    plan = Manager.select_clients(_request(2, same_machine=True), candidates,
                                  [0, 1])
    assert {c["row"].client_id for _, c in plan} == {1}


def test_select_clients_respects_room_and_gpu_filters():
    candidates = [
        _candidate(1, 0, 4, room_id=1, gpu=False),
        _candidate(2, 5, 1, room_id=1, gpu=True),
        _candidate(3, 0, 4, room_id=2, gpu=True),
    ]
    plan = Manager.select_clients(_request(1, needs_gpu=True), candidates, [0])
    assert [c["row"].client_id for _, c in plan] == [2]


@st.composite
def _placement_case(draw):
    n = draw(st.integers(1, 5))
    loads = [draw(st.integers(0, 4)) for _ in range(n)]
    spares = [draw(st.integers(0, 3)) for _ in range(n)]
    ranks = list(range(draw(st.integers(1, 8))))
    return loads, spares, ranks


@given(_placement_case())
@settings(max_examples=200, deadline=None)
def test_select_clients_matches_bruteforce_simulation(case):
    loads, spares, ranks = case
    candidates = [
        _candidate(i + 1, loads[i], spares[i]) for i in range(len(loads))
    ]
    plan = Manager.select_clients(_request(len(ranks)), candidates, list(ranks))

    # Independent simulation: repeatedly hand the next rank to the candidate
    # with the smallest effective load (ties to the smallest id) that still
    # has a free slot.
    sim_load = {i + 1: loads[i] for i in range(len(loads))}
    sim_free = {i + 1: spares[i] for i in range(len(loads))}
    expected = []
    for rank in ranks:
        viable = [cid for cid in sim_load if sim_free[cid] > 0]
        if not viable:
            break
        pick = min(viable, key=lambda cid: (sim_load[cid], cid))
        expected.append((rank, pick))
        sim_load[pick] += 1
        sim_free[pick] -= 1
    assert [(rank, c["row"].client_id) for rank, c in plan] == expected
