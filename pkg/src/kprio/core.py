"""Task model, backend interface and run-to-quiescence execution."""

from __future__ import annotations

import random
import sys
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Optional

import numpy as np

from .atomics import AtomicInt

K_MAX = 512


class ConfigurationError(ValueError):
    """A parameter lies outside the domain an operation accepts."""


class QuiescenceTimeout(RuntimeError):
    """The run did not reach quiescence within its wall-clock budget."""


@dataclass(slots=True, eq=False)
class Task:
    """A schedulable unit of work.

    ``key`` is the priority (lower runs first).  ``k`` overrides the
    scheduler's default relaxation for this task.  ``liveness`` is an
    optional monotone predicate over ``payload``; once it returns False
    the task may be discarded by the backend instead of executed.
    ``fn(payload, worker)`` is the body run by :func:`run_to_quiescence`.
    """

    key: float
    payload: Any = None
    fn: Optional[Callable[[Any, "Worker"], None]] = None
    k: Optional[int] = None
    liveness: Optional[Callable[[Any], bool]] = None

    def is_dead(self) -> bool:
        return self.liveness is not None and not self.liveness(self.payload)


@dataclass(frozen=True)
class SchedulerConfig:
    P: int = 1
    k_default: int = 1
    k_max: int = K_MAX
    seed: int = 0

    def __post_init__(self):
        if self.P < 1:
            raise ConfigurationError(f"P must be >= 1, got {self.P}")
        if not 0 <= self.k_default <= self.k_max:
            raise ConfigurationError(
                f"need 0 <= k_default <= k_max, got k_default={self.k_default}, k_max={self.k_max}"
            )


@dataclass
class BackendStats:
    pushes: int = 0
    pops: int = 0
    spurious_failures: int = 0
    steals_or_spies: int = 0
    dead_tasks_eliminated: int = 0

    def __add__(self, other: "BackendStats") -> "BackendStats":
        return BackendStats(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class _Counters:
    __slots__ = ("pushes", "pops", "spurious", "steals", "dead")

    def __init__(self) -> None:
        self.pushes = self.pops = self.spurious = self.steals = self.dead = 0


def place_rngs(seed: int, P: int) -> list[random.Random]:
    """One independent generator per place, split from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(P)
    return [random.Random(int(c.generate_state(2, np.uint64)[0])) for c in children]


class Backend(ABC):
    """Common surface of the scheduling data structures.

    ``push``/``pop`` for a given place must only ever be called from the
    thread owning that place.  ``pop`` returns None both when the
    structure is empty and on a permitted spurious failure.

    Two optional hooks exist for harnesses: ``on_dead(task)`` fires when a
    popped task is discarded because its liveness predicate failed, and
    ``yield_hook(place, label)`` fires between atomic steps of an operation
    so that a supervisor can suspend a worker at an arbitrary point.
    """

    name = "abstract"

    def __init__(self, config: SchedulerConfig) -> None:
        self.config = config
        self.P = config.P
        self.k_max = config.k_max
        self.rngs = place_rngs(config.seed, config.P)
        self._ctr = [_Counters() for _ in range(config.P)]
        self.on_dead: Optional[Callable[[Task], None]] = None
        self.yield_hook: Optional[Callable[[int, str], None]] = None

    @abstractmethod
    def push(self, place: int, k: int, task: Task) -> None: ...

    @abstractmethod
    def pop(self, place: int) -> Optional[Task]: ...

    def stats(self) -> BackendStats:
        total = BackendStats()
        for c in self._ctr:
            total.pushes += c.pushes
            total.pops += c.pops
            total.spurious_failures += c.spurious
            total.steals_or_spies += c.steals
            total.dead_tasks_eliminated += c.dead
        return total

    def _check_k(self, k: int) -> None:
        if not 0 <= k <= self.k_max:
            raise ConfigurationError(f"k={k} outside [0, {self.k_max}]")

    def _discard_dead(self, place: int, task: Task) -> None:
        self._ctr[place].dead += 1
        if self.on_dead is not None:
            self.on_dead(task)


class Worker:
    """Execution context handed to running tasks."""

    __slots__ = ("place", "_run", "rng", "executed")

    def __init__(self, place: int, run: "_Run") -> None:
        self.place = place
        self._run = run
        self.rng = random.Random(run.config.seed * 1_000_003 + place)
        self.executed = 0

    def spawn(self, key: float, fn=None, payload=None, k: Optional[int] = None, liveness=None) -> None:
        self.push(Task(key, payload, fn, k, liveness))

    def push(self, task: Task) -> None:
        run = self._run
        k = run.config.k_default if task.k is None else task.k
        run.inflight.fetch_add(1)
        run.backend.push(self.place, k, task)


class _Run:
    def __init__(self, config: SchedulerConfig, backend: Backend) -> None:
        self.config = config
        self.backend = backend
        self.inflight = AtomicInt(0)
        self.stopped = False
        self.errors: list[BaseException] = []


SPIN_LIMIT = 8
YIELD_LIMIT = 64
IDLE_SLEEP = 2e-4


def idle(fails: int) -> None:
    """Back off after ``fails`` consecutive failed pops.

    Spin briefly, then yield the interpreter, then sleep for short real
    intervals so that idle places cannot starve the one holding work.
    """
    if fails <= SPIN_LIMIT:
        return
    time.sleep(0 if fails <= YIELD_LIMIT else IDLE_SLEEP)


def _worker_loop(worker: Worker) -> None:
    run = worker._run
    pop = run.backend.pop
    inflight = run.inflight
    place = worker.place
    fails = 0
    try:
        while not run.stopped:
            task = pop(place)
            if task is None:
                if inflight.load() == 0:
                    return
                fails += 1
                idle(fails)
                continue
            fails = 0
            if task.fn is not None:
                task.fn(task.payload, worker)
            worker.executed += 1
            inflight.fetch_add(-1)
    except BaseException as exc:  # surfaced by run_to_quiescence
        run.errors.append(exc)
        run.stopped = True


def run_to_quiescence(
    root: Task,
    config: SchedulerConfig,
    backend: Backend,
    *,
    timeout: float = 120.0,
    switch_interval: Optional[float] = None,
) -> BackendStats:
    """Execute ``root`` and everything it transitively spawns on ``config.P`` threads.

    Returns once every pushed task has been executed or discarded as dead.
    Raises :class:`QuiescenceTimeout` if that does not happen within
    ``timeout`` seconds.  ``switch_interval`` temporarily overrides the
    interpreter's thread switch interval for the duration of the run.
    """
    if backend.P != config.P:
        raise ConfigurationError(f"backend built for P={backend.P}, config has P={config.P}")
    run = _Run(config, backend)
    backend.on_dead = lambda task: run.inflight.fetch_add(-1)
    workers = [Worker(p, run) for p in range(config.P)]
    workers[0].push(root)

    old_interval = sys.getswitchinterval()
    if switch_interval is not None:
        sys.setswitchinterval(switch_interval)
    try:
        threads = [
            threading.Thread(target=_worker_loop, args=(w,), name=f"place-{w.place}", daemon=True)
            for w in workers
        ]
        for t in threads:
            t.start()
        deadline = time.monotonic() + timeout
        for t in threads:
            t.join(max(0.0, deadline - time.monotonic()))
        if any(t.is_alive() for t in threads):
            run.stopped = True
            for t in threads:
                t.join(1.0)
            raise QuiescenceTimeout(
                f"{backend.name}: {run.inflight.load()} tasks still in flight after {timeout:.1f}s"
            )
    finally:
        sys.setswitchinterval(old_interval)
        backend.on_dead = None
    if run.errors:
        raise run.errors[0]
    return backend.stats()
