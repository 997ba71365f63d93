"""Relaxation and exactly-once audits for the scheduling backends.

Two relaxation disciplines are checked against sequential traces:

``central``
    a live item ``y`` may be ignored while fewer than ``y.k`` live items
    were pushed after it (by anyone);
``hybrid``
    the same, but only items pushed after ``y`` *by the place that pushed
    y* count.

A pop result ``x`` is legal iff every live item with a strictly smaller
key is ignorable.
"""

from __future__ import annotations

import csv
import io
import random
import threading
import time
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .atomics import AtomicInt
from .core import Backend, SchedulerConfig, Task, idle

DISCIPLINES = ("central", "hybrid")
CSV_VERSION = "# kprio-csv v1"


@dataclass
class TraceEvent:
    ts: int
    op: str  # "push" or "pop"
    place: int
    task_id: Optional[int] = None
    key: Optional[float] = None
    k: Optional[int] = None
    result_id: Optional[int] = None


TRACE_COLUMNS = ["ts", "op", "place", "task_id", "key", "k", "result_id"]


def trace_to_csv(trace: Iterable[TraceEvent]) -> str:
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for ev in trace:
        w.writerow(["" if getattr(ev, c) is None else getattr(ev, c) for c in TRACE_COLUMNS])
    return buf.getvalue()


def trace_from_csv(text: str) -> list[TraceEvent]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append(
            TraceEvent(
                ts=int(row["ts"]),
                op=row["op"],
                place=int(row["place"]),
                task_id=int(row["task_id"]) if row["task_id"] else None,
                key=float(row["key"]) if row["key"] else None,
                k=int(row["k"]) if row["k"] else None,
                result_id=int(row["result_id"]) if row["result_id"] else None,
            )
        )
    return out


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n: int) -> None:
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i: int, delta: int) -> None:
        i += 1
        tree = self.tree
        while i <= self.n:
            tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        """Sum over indices [0, i)."""
        s = 0
        tree = self.tree
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s


class LegalSetOracle:
    """Incremental legal-set computation over a sequential trace."""

    def __init__(self, discipline: str, capacity: int) -> None:
        if discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline {discipline!r}")
        self.discipline = discipline
        self.capacity = capacity
        self._n_pushed = 0
        self._live: dict[int, tuple[float, int, int, int]] = {}  # id -> (key, idx, place, k)
        self._by_key: list[tuple[float, int, int]] = []  # (key, idx, id)
        self._global = _Fenwick(capacity)
        self._per_place: dict[int, _Fenwick] = {}
        self._live_total = 0
        self._live_place: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._live)

    def live_ids(self) -> set[int]:
        return set(self._live)

    def push(self, task_id: int, key: float, k: int, place: int) -> None:
        if task_id in self._live:
            raise ValueError(f"task {task_id} pushed twice")
        if self._n_pushed >= self.capacity:
            raise ValueError("oracle capacity exhausted")
        idx = self._n_pushed
        self._n_pushed += 1
        self._live[task_id] = (key, idx, place, k)
        insort(self._by_key, (key, idx, task_id))
        self._global.add(idx, 1)
        tree = self._per_place.get(place)
        if tree is None:
            tree = self._per_place[place] = _Fenwick(self.capacity)
        tree.add(idx, 1)
        self._live_total += 1
        self._live_place[place] = self._live_place.get(place, 0) + 1

    def pop(self, task_id: int) -> None:
        key, idx, place, _ = self._live.pop(task_id)
        del self._by_key[bisect_left(self._by_key, (key, idx, task_id))]
        self._global.add(idx, -1)
        self._per_place[place].add(idx, -1)
        self._live_total -= 1
        self._live_place[place] -= 1

    def newer_live(self, task_id: int) -> int:
        """Live items pushed after ``task_id`` that count against its window."""
        _, idx, place, _ = self._live[task_id]
        if self.discipline == "central":
            return self._live_total - self._global.prefix(idx + 1)
        return self._live_place[place] - self._per_place[place].prefix(idx + 1)

    def ignorable(self, task_id: int) -> bool:
        return self.newer_live(task_id) < self._live[task_id][3]

    def is_legal(self, task_id: int) -> bool:
        if task_id not in self._live:
            return False
        key = self._live[task_id][0]
        for y_key, _, y in self._by_key:
            if y_key >= key:
                return True
            if not self.ignorable(y):
                return False
        return True

    def legal_set(self) -> set[int]:
        bound = None
        for y_key, _, y in self._by_key:
            if not self.ignorable(y):
                bound = y_key
                break
        if bound is None:
            return set(self._live)
        return {tid for tid, (key, *_rest) in self._live.items() if key <= bound}


def _replay(trace: Sequence[TraceEvent], discipline: str) -> LegalSetOracle:
    oracle = LegalSetOracle(discipline, capacity=max(1, len(trace)))
    for ev in trace:
        if ev.op == "push":
            oracle.push(ev.task_id, ev.key, ev.k, ev.place)
        elif ev.result_id is not None:
            oracle.pop(ev.result_id)
    return oracle


def legal_set_oracle(trace: Sequence[TraceEvent], discipline: str) -> set[int]:
    """Ids a pop issued after ``trace`` may legally return."""
    return _replay(trace, discipline).legal_set()


def brute_force_legal_set(trace: Sequence[TraceEvent], discipline: str) -> set[int]:
    """Direct transcription of the definition; quadratic, for cross-checks."""
    pushes = [ev for ev in trace if ev.op == "push"]
    popped = {ev.result_id for ev in trace if ev.op == "pop" and ev.result_id is not None}
    live = [ev for ev in pushes if ev.task_id not in popped]

    def ignorable(y: TraceEvent) -> bool:
        pos = live.index(y)
        newer = [
            z for z in live[pos + 1 :] if discipline == "central" or z.place == y.place
        ]
        return len(newer) < y.k

    return {
        x.task_id
        for x in live
        if all(ignorable(y) for y in live if y.key < x.key)
    }


@dataclass
class AuditResult:
    passed: bool
    ops: int
    pops: int
    message: str = ""
    counterexample: list[TraceEvent] = field(default_factory=list)


def sequential_audit(
    backend: Backend,
    discipline: str,
    ops: int,
    seed: int,
    k_choices: Sequence[int] = (8,),
    push_prob: float = 0.55,
    key_space: int = 1000,
    drain_attempts: int = 200_000,
) -> AuditResult:
    """Drive ``backend`` from one thread with a random push/pop mix.

    Every non-None pop is checked against the legal-set oracle; a pop of
    a task that is not live is a duplicate.  After ``ops`` operations the
    structure is drained round-robin and must give back every live task.
    """
    rng = random.Random(seed)
    P = backend.P
    oracle = LegalSetOracle(discipline, capacity=ops + 1)
    trace: list[TraceEvent] = []
    next_id = 0
    pops = 0

    def do_pop(place: int) -> Optional[AuditResult]:
        nonlocal pops
        task = backend.pop(place)
        ev = TraceEvent(len(trace), "pop", place, result_id=None if task is None else task.payload)
        trace.append(ev)
        if task is None:
            return None
        pops += 1
        tid = task.payload
        if tid not in oracle._live:
            return AuditResult(False, len(trace), pops, f"task {tid} returned but not live", list(trace))
        if not oracle.is_legal(tid):
            return AuditResult(
                False, len(trace), pops, f"task {tid} (key {task.key}) not in legal set", list(trace)
            )
        oracle.pop(tid)
        return None

    for _ in range(ops):
        place = rng.randrange(P)
        if rng.random() < push_prob:
            key = float(rng.randrange(key_space))
            k = rng.choice(k_choices)
            backend.push(place, k, Task(key, next_id))
            trace.append(TraceEvent(len(trace), "push", place, next_id, key, k))
            oracle.push(next_id, key, k, place)
            next_id += 1
        else:
            bad = do_pop(place)
            if bad is not None:
                return bad

    attempts = 0
    place = 0
    while len(oracle) and attempts < drain_attempts:
        bad = do_pop(place)
        if bad is not None:
            return bad
        place = (place + 1) % P
        attempts += 1
    if len(oracle):
        return AuditResult(
            False, len(trace), pops, f"{len(oracle)} tasks never returned during drain", list(trace)
        )
    return AuditResult(True, len(trace), pops)


# -- concurrent checks -----------------------------------------------------------


@dataclass
class StressResult:
    passed: bool
    tasks: int
    consumed: int
    duplicates: int
    missing: int
    seconds: float
    message: str = ""


def _stress_key(i: int) -> float:
    return float((i * 2654435761) % 1_000_003)


def concurrent_stress(
    factory: Callable[[SchedulerConfig], Backend],
    P: int,
    tasks: int,
    seed: int,
    k: int = 8,
    timeout: float = 600.0,
) -> StressResult:
    """Each of ``P`` threads pushes its share of ``tasks`` ids, interleaved
    with pops, then all drain.  Passes iff every id is consumed exactly once."""
    backend = factory(SchedulerConfig(P=P, k_default=k, seed=seed))
    consumed = AtomicInt(0)
    popped: list[list[int]] = [[] for _ in range(P)]
    deadline = time.monotonic() + timeout
    timed_out = [False]

    def worker(w: int) -> None:
        push, pop = backend.push, backend.pop
        mine = range(w, tasks, P)
        out = popped[w]
        fails = 0
        for tid in mine:
            push(w, k, Task(_stress_key(tid), tid))
            t = pop(w)
            if t is not None:
                out.append(t.payload)
                consumed.fetch_add(1)
        while consumed.load() < tasks:
            t = pop(w)
            if t is None:
                fails += 1
                if fails & 63 == 0 and time.monotonic() > deadline:
                    timed_out[0] = True
                    return
                idle(fails)
                continue
            fails = 0
            out.append(t.payload)
            consumed.fetch_add(1)

    t0 = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(P)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    seconds = time.perf_counter() - t0
    ids = np.fromiter((x for lst in popped for x in lst), dtype=np.int64)
    counts = np.bincount(ids, minlength=tasks) if ids.size else np.zeros(tasks, dtype=np.int64)
    dup = int((counts > 1).sum())
    missing = int((counts == 0).sum())
    ok = dup == 0 and missing == 0 and not timed_out[0]
    msg = "timeout" if timed_out[0] else ""
    return StressResult(ok, tasks, int(ids.size), dup, missing, seconds, msg)


# hook labels at which the pushed item is already reachable by other places
_PLACED_LABELS = {"central.push.placed", "hybrid.push.local", "hybrid.publish.retry"}


@dataclass
class FrozenResult:
    passed: bool
    baseline_seconds: float
    seconds: float
    frozen_place: int
    frozen_label: str
    expected: int
    consumed: int
    message: str = ""


class _Abandon(BaseException):
    """Unwinds a frozen worker once the run is over; it never resumes."""


def _frozen_run(factory, P, tasks, seed, k, freeze_place, freeze_at, budget):
    backend = factory(SchedulerConfig(P=P, k_default=k, seed=seed))
    release = threading.Event()
    state = {"label": "", "frozen": False, "in_progress": None}
    calls = [0]

    if freeze_place is not None:

        def hook(place: int, label: str) -> None:
            if place != freeze_place:
                return
            calls[0] += 1
            if calls[0] == freeze_at:
                state["label"] = label
                state["frozen"] = True
                release.wait()
                raise _Abandon

        backend.yield_hook = hook

    pushed_done = [0] * P
    pushed_ids: list[list[int]] = [[] for _ in range(P)]
    popped: list[list[int]] = [[] for _ in range(P)]
    finished_pushing = [False] * P
    consumed = AtomicInt(0)
    deadline = time.monotonic() + budget
    status = {"timeout": False}

    def expected_total() -> Optional[int]:
        if not all(finished_pushing[w] or (w == freeze_place and state["frozen"]) for w in range(P)):
            return None
        extra = 1 if (freeze_place is not None and state["label"] in _PLACED_LABELS) else 0
        return sum(pushed_done) + extra

    def worker(w: int) -> None:
        try:
            drive(w)
        except _Abandon:
            pass

    def drive(w: int) -> None:
        push, pop = backend.push, backend.pop
        for tid in range(w, tasks, P):
            if w == freeze_place:
                state["in_progress"] = tid
            push(w, k, Task(_stress_key(tid), tid))
            pushed_ids[w].append(tid)
            pushed_done[w] += 1
            t = pop(w)
            if t is not None:
                popped[w].append(t.payload)
                consumed.fetch_add(1)
        finished_pushing[w] = True
        fails = 0
        while True:
            exp = expected_total()
            if exp is not None and consumed.load() >= exp:
                return
            t = pop(w)
            if t is None:
                if time.monotonic() > deadline:
                    status["timeout"] = True
                    return
                fails += 1
                idle(fails)
                continue
            fails = 0
            popped[w].append(t.payload)
            consumed.fetch_add(1)

    t0 = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(P)]
    for t in threads:
        t.start()
    for w, t in enumerate(threads):
        if w == freeze_place:
            continue
        t.join()
    seconds = time.perf_counter() - t0
    release.set()
    if freeze_place is not None:
        threads[freeze_place].join(5.0)

    expected = {tid for lst in pushed_ids for tid in lst}
    if freeze_place is not None and state["label"] in _PLACED_LABELS and state["in_progress"] is not None:
        expected.add(state["in_progress"])
    got = [x for lst in popped for x in lst]
    return backend, state, seconds, expected, got, status["timeout"]


def frozen_worker_check(
    factory: Callable[[SchedulerConfig], Backend],
    P: int,
    tasks: int,
    seed: int,
    k: int = 8,
    budget_factor: float = 10.0,
    min_budget: float = 2.0,
) -> FrozenResult:
    """Suspend one worker at a random atomic step and let the others drain.

    The run passes iff every task whose push completed (plus the frozen
    worker's in-flight task, when it was already placed) is consumed
    exactly once, within ``budget_factor`` times the unfrozen baseline.
    """
    rng = random.Random(seed)
    _, _, base_s, base_exp, base_got, _ = _frozen_run(factory, P, tasks, seed, k, None, 0, 600.0)
    if sorted(base_got) != sorted(base_exp):
        return FrozenResult(False, base_s, 0.0, -1, "", len(base_exp), len(base_got), "baseline lost tasks")
    budget = max(min_budget, budget_factor * base_s)
    freeze_place = rng.randrange(P)
    freeze_at = rng.randint(1, max(1, tasks // P))
    _, state, secs, expected, got, timed_out = _frozen_run(
        factory, P, tasks, seed + 1, k, freeze_place, freeze_at, budget
    )
    ok = not timed_out and len(got) == len(set(got)) and set(got) == expected and secs <= budget
    msg = ""
    if timed_out or secs > budget:
        msg = f"did not drain within {budget:.2f}s"
    elif len(got) != len(set(got)):
        msg = "duplicate consumption"
    elif set(got) != expected:
        msg = f"{len(expected - set(got))} missing, {len(set(got) - expected)} unexpected"
    return FrozenResult(ok, base_s, secs, freeze_place, state["label"], len(expected), len(got), msg)


def spy_checksum(block) -> tuple:
    return (block.length, tuple(block.tags), tuple(block.keys), tuple(id(t) for t in block.tasks))
