import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridforge.errors import ValidationError
from gridforge.model import (
    Availability,
    ClientConfig,
    ClientNode,
    Domain,
    ProcessDef,
    Request,
    RequestStatus,
    ResourceSnapshot,
    RunHeader,
    domain_content_hash,
    parse_parameters,
    validate_request,
)
from gridforge.serialization import from_wire, to_wire

KNOWN = dict(
    known_domains={1},
    known_processes={2},
    known_files={5, 6},
    known_rooms={1},
)


def test_validate_applies_defaults():
    req = validate_request(
        {"domain_id": 1, "process_id": 2, "repetitions": 1, "room_ids": [1]},
        **KNOWN,
        user="alice",
    )
    assert req.parallel is False
    assert req.needs_gpu is False
    assert req.same_machine is False
    assert req.parameters == []
    assert req.status == RequestStatus.QUEUED


def test_validate_rejects_zero_repetitions():
    with pytest.raises(ValidationError) as err:
        validate_request({"domain_id": 1, "process_id": 2, "repetitions": 0, "room_ids": [1]}, **KNOWN)
    assert "repetitions" in err.value.fields


def test_validate_accepts_large_fanout():
    req = validate_request(
        {"domain_id": 1, "process_id": 2, "repetitions": 1200, "parameters": ["3"], "room_ids": [1]},
        **KNOWN,
    )
    assert req.repetitions == 1200
    assert req.parameters == ["3"]


def test_validate_collects_every_violation():
    with pytest.raises(ValidationError) as err:
        validate_request(
            {"domain_id": 9, "process_id": 9, "repetitions": 0, "room_ids": [], "shared_file_ids": [99]},
            **KNOWN,
        )
    assert set(err.value.fields) >= {"domain_id", "process_id", "repetitions", "room_ids", "shared_file_ids"}


def test_validate_rejects_comma_in_parameter():
    with pytest.raises(ValidationError) as err:
        validate_request(
            {"domain_id": 1, "process_id": 2, "repetitions": 1, "room_ids": [1], "parameters": ["a,b"]},
            **KNOWN,
        )
    assert "parameters" in err.value.fields


def test_comma_string_form_splits():
    assert parse_parameters("a,b,c") == ["a", "b", "c"]
    assert parse_parameters("") == []
    assert parse_parameters(["1", "2"]) == ["1", "2"]


def test_same_machine_capacity_rejected_at_validation():
    with pytest.raises(ValidationError) as err:
        validate_request(
            {"domain_id": 1, "process_id": 2, "repetitions": 3, "room_ids": [1], "same_machine": True},
            **KNOWN,
            max_same_machine_slots=2,
        )
    assert "same_machine" in err.value.fields


def test_client_config_threshold_ordering_enforced():
    ClientConfig(interactive_allocation_pct=10, cpu_refusal_threshold_pct=70)
    with pytest.raises(ValueError):
        ClientConfig(interactive_allocation_pct=80, cpu_refusal_threshold_pct=70)
    with pytest.raises(ValueError):
        ClientConfig(cpu_refusal_threshold_pct=101)


def test_snapshot_percentages_bounded():
    with pytest.raises(ValueError):
        ResourceSnapshot(cpu_pct=120.0)


def test_content_hash_changes_iff_bytes_change():
    base = domain_content_hash("FROM python", "numpy")
    assert domain_content_hash("FROM python", "numpy") == base
    assert domain_content_hash("FROM python ", "numpy") != base
    assert domain_content_hash("FROM python", "numpy\n") != base


@given(st.text(max_size=60), st.text(max_size=60), st.text(max_size=60), st.text(max_size=60))
def test_content_hash_stability_property(r1, m1, r2, m2):
    same = domain_content_hash(r1, m1) == domain_content_hash(r2, m2)
    assert same == ((r1, m1) == (r2, m2))


def test_domain_fills_and_checks_hash():
    d = Domain(domain_id=1, name="py", build_recipe="interpreter: python3", dependency_manifest="")
    assert d.content_hash == domain_content_hash("interpreter: python3", "")
    with pytest.raises(ValueError):
        Domain(
            domain_id=2,
            name="py",
            build_recipe="interpreter: python3",
            dependency_manifest="",
            content_hash="bogus",
        )


def test_entry_command_must_reference_exactly_one_payload_file():
    p = ProcessDef(process_id=1, name="p", owner_user="u", entry_command="python3 main.py")
    assert p.entry_file(["main.py", "lib.py"]) == "main.py"
    with pytest.raises(ValueError):
        p.entry_file(["other.py"])
    both = ProcessDef(process_id=2, name="p", owner_user="u", entry_command="python3 a.py b.py")
    with pytest.raises(ValueError):
        both.entry_file(["a.py", "b.py"])


def test_client_node_helpers():
    node = ClientNode(client_id=1, address="10.0.0.5:9000", config=ClientConfig(max_concurrent_runs=3))
    assert node.host == "10.0.0.5"
    assert node.port == 9000
    node.active_run_count = 2
    assert node.spare_slots == 1


def test_wire_round_trip_request():
    req = Request(
        request_id=7,
        user="alice",
        domain_id=1,
        process_id=2,
        repetitions=10,
        parallel=True,
        parameters=["3"],
        shared_file_ids={6, 5},
        room_ids={1},
        created_at=123.0,
    )
    wire = to_wire(req)
    assert wire["shared_file_ids"] == [5, 6]  # sets serialize sorted
    assert wire["status"] == "queued"
    assert from_wire(Request, wire) == req


def test_wire_round_trip_client_node():
    node = ClientNode(
        client_id=3,
        address="127.0.0.1:1234",
        rooms={1},
        has_gpu=True,
        snapshot=ResourceSnapshot(cpu_pct=12.5, ram_pct=40.0, taken_at=1.0),
        availability=Availability.BUSY,
    )
    assert from_wire(ClientNode, to_wire(node)) == node


def test_run_header_validation():
    RunHeader("/a", "/b", "/c", rank=0, repetitions=1).validate()
    with pytest.raises(ValueError):
        RunHeader("/a", "/b", "/c", rank=-1, repetitions=2).validate()
    with pytest.raises(ValueError):
        RunHeader("/a", "/b", "/c", rank=0, repetitions=1, parameters=["x,y"]).validate()
