from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build
from kprio import Task


@given(keys=st.lists(st.integers(0, 100), max_size=80))
@settings(max_examples=60, deadline=None)
def test_steal_half_moves_floor_half_worst_keys(keys):
    b = build("ws", P=2)
    for key in keys:
        b.push(0, 0, Task(float(key)))
    moved = b.steal_half(1, 0)
    n = len(keys)
    assert moved == n // 2
    assert b.size(0) == n - n // 2
    assert b.size(1) == n // 2
    kept = sorted(e[0] for e in b._places[0].heap)
    stolen = sorted(e[0] for e in b._places[1].heap)
    assert kept + stolen == sorted(float(k) for k in keys)


def test_pop_steals_when_local_empty():
    b = build("ws", P=2, seed=0)
    for i in range(10):
        b.push(0, 0, Task(float(i), i))
    t = b.pop(1)
    assert t.payload == 5  # best of the stolen worse half
    st = b.stats()
    assert st.steals_or_spies == 1 and st.pops == 1


def test_local_pop_order():
    b = build("ws")
    for key in (2.0, 0.5, 1.0):
        b.push(0, 0, Task(key))
    assert [b.pop(0).key for _ in range(3)] == [0.5, 1.0, 2.0]
    assert b.pop(0) is None
