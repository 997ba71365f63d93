from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build
from kprio import SchedulerConfig, Task
from kprio.centralized import SEGMENT_SIZE, TAKEN, CentralizedKPriority


def _slot_of(backend, task):
    for seg in backend._segments.values():
        for it in seg.slots:
            if it is not None and it.task is task and it.tag != TAKEN:
                return it.tag
    return None


@given(k=st.integers(1, 64), pushes=st.integers(1, 300), seed=st.integers(0, 2**16))
@settings(max_examples=40, deadline=None)
def test_push_lands_inside_window_of_current_tail(k, pushes, seed):
    b = build("central", k=k, seed=seed)
    for i in range(pushes):
        t = Task(float(i))
        before = b.tail
        b.push(0, k, t)
        pos = _slot_of(b, t)
        # either the window had room, or it filled and tail moved by exactly k
        assert before <= pos < before + 2 * k
        assert b.tail - k <= pos < b.tail + k
        if pos >= before + k:
            assert b.tail == before + k


def test_tail_advances_by_k_when_window_fills():
    b = build("central", k=4)
    for i in range(4):
        b.push(0, 4, Task(float(i)))
    assert b.tail == 0
    b.push(0, 4, Task(4.0))
    assert b.tail == 4


def test_k_zero_publishes_immediately():
    b = build("central", P=2, k=0)
    b.push(0, 0, Task(1.0, "x"))
    assert b.tail == 1
    assert b.pop(1).payload == "x"


def test_published_items_visible_to_other_places():
    b = build("central", P=2, k=2)
    for i in range(3):
        b.push(0, 2, Task(float(i), i))
    assert b.tail == 2
    got = b.pop(1)
    assert got.payload in (0, 1)


def test_owner_sees_its_unpublished_items_in_order():
    b = build("central", P=2, k=64)
    for key in (3.0, 1.0, 2.0):
        b.push(0, 64, Task(key))
    assert b.tail == 0
    assert [b.pop(0).key for _ in range(3)] == [1.0, 2.0, 3.0]


def test_probe_finds_unpublished_item_only_within_its_window():
    cfg = SchedulerConfig(P=2, k_default=4, k_max=4, seed=1)
    b = CentralizedKPriority(cfg)
    b.push(0, 4, Task(1.0, "hidden"))
    got = None
    for _ in range(200):
        got = b.pop(1)
        if got is not None:
            break
    assert got is not None and got.payload == "hidden"
    assert b.stats().steals_or_spies >= 1


def test_item_taken_once_despite_duplicate_references():
    b = build("central", P=3, k=0)
    for i in range(50):
        b.push(i % 3, 0, Task(float(i), i))
    seen = []
    for r in range(400):
        t = b.pop(r % 3)
        if t is not None:
            seen.append(t.payload)
    assert sorted(seen) == list(range(50))


def test_segments_reclaimed_and_memory_bounded():
    P = 2
    b = build("central", P=P, k=8)
    peak = 0
    for i in range(6 * SEGMENT_SIZE):
        b.push(i % P, 8, Task(float(i)))
        assert b.pop((i + 1) % P) is not None or b.pop(i % P) is not None
        peak = max(peak, b.live_segments())
    while any(b.pop(p) is not None for p in range(P)):
        pass
    assert b.segments_reclaimed >= 4
    assert peak <= 3


def test_recycled_items_do_not_resurrect_stale_references():
    b = build("central", P=2, k=1)
    first = Task(1.0, "a")
    b.push(0, 1, first)
    b.push(0, 1, Task(5.0, "filler"))
    assert b.pop(1).payload == "a"
    # the envelope of "a" is reused for "b" at a new slot; old refs must not match
    b.push(1, 1, Task(0.5, "b"))
    b.push(1, 1, Task(6.0, "filler2"))
    seen = [b.pop(0), b.pop(0), b.pop(1), b.pop(1)]
    payloads = [t.payload for t in seen if t is not None]
    assert payloads.count("b") == 1
    assert "a" not in payloads


@pytest.mark.parametrize("k", [0, 1, 8])
def test_dead_items_discarded_on_pop(k):
    b = build("central", k=k)
    b.push(0, k, Task(1.0, liveness=lambda p: False))
    b.push(0, k, Task(2.0, "ok"))
    assert b.pop(0).payload == "ok"
    assert b.stats().dead_tasks_eliminated == 1
