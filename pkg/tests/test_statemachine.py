import itertools

import pytest

from gridforge.errors import IllegalTransition
from gridforge.model import (
    TERMINAL_RUN_STATUSES,
    RunEvent,
    RunStatus,
    run_status_transition,
)


def test_paper_anchored_codes():
    assert RunStatus.SUCCESS == 3
    assert RunStatus.CANCELED == 5


def test_success_from_running():
    assert run_status_transition(RunStatus.RUNNING, RunEvent.SUCCEEDED) == 3


def test_cancel_from_distributed():
    assert run_status_transition(RunStatus.DISTRIBUTED, RunEvent.CANCEL_REQUESTED) == 5


def test_terminal_states_reject_everything():
    for status in TERMINAL_RUN_STATUSES:
        for event in RunEvent:
            with pytest.raises(IllegalTransition):
                run_status_transition(status, event)


def test_started_after_success_is_illegal():
    with pytest.raises(IllegalTransition):
        run_status_transition(RunStatus.SUCCESS, RunEvent.STARTED)


def test_closure_over_full_grid():
    # Every (status, event) pair either yields a defined successor or rejects;
    # nothing else can happen.
    defined = 0
    for status, event in itertools.product(RunStatus, RunEvent):
        try:
            nxt = run_status_transition(status, event)
        except IllegalTransition:
            continue
        assert isinstance(nxt, RunStatus)
        defined += 1
    assert defined == 21  # frozen size of the transition table


def test_happy_paths():
    # Plain run: pending -> distributed -> building -> running -> success.
    s = RunStatus.PENDING
    for event in (RunEvent.DISPATCHED, RunEvent.BUILD_STARTED, RunEvent.STARTED, RunEvent.SUCCEEDED):
        s = run_status_transition(s, event)
    assert s == RunStatus.SUCCESS

    # Parallel run passes through the barrier; cached image skips building.
    s = RunStatus.PENDING
    for event in (RunEvent.DISPATCHED, RunEvent.BARRIER_WAIT, RunEvent.STARTED):
        s = run_status_transition(s, event)
    assert s == RunStatus.RUNNING


def test_orphan_only_once_on_a_client():
    with pytest.raises(IllegalTransition):
        run_status_transition(RunStatus.PENDING, RunEvent.MARKED_ORPHAN)
    assert run_status_transition(RunStatus.RUNNING, RunEvent.MARKED_ORPHAN) == RunStatus.ORPHANED


def test_accepts_raw_ints_and_strings():
    assert run_status_transition(2, "succeeded") == 3
