"""Work-stealing baseline with per-place priority queues and steal-half.

Each place owns a binary heap guarded by a latch.  A place that runs
dry picks random victims and moves ``floor(n / 2)`` of the victim's
tasks, namely the half with the worst keys, into its own heap.  There is
no ordering guarantee between places.
"""

from __future__ import annotations

import threading
from heapq import heapify, heappop, heappush
from typing import Optional

from .core import Backend, SchedulerConfig, Task


class _Place:
    __slots__ = ("heap", "seq", "latch")

    def __init__(self) -> None:
        self.heap: list = []
        self.seq = 0
        self.latch = threading.Lock()


class WorkStealing(Backend):
    name = "ws"

    def __init__(self, config: SchedulerConfig) -> None:
        super().__init__(config)
        self._places = [_Place() for _ in range(config.P)]

    def size(self, place: int) -> int:
        return len(self._places[place].heap)

    def push(self, place: int, k: int, task: Task) -> None:
        # k carries no meaning here
        st = self._places[place]
        with st.latch:
            heappush(st.heap, (task.key, st.seq, task))
            st.seq += 1
        self._ctr[place].pushes += 1

    def _pop_local(self, place: int, st: _Place) -> Optional[Task]:
        while True:
            with st.latch:
                if not st.heap:
                    return None
                task = heappop(st.heap)[2]
            if task.liveness is not None and not task.liveness(task.payload):
                self._discard_dead(place, task)
                continue
            return task

    def steal_half(self, thief: int, victim: int) -> int:
        """Move the worse half of ``victim``'s heap to ``thief``; return the count."""
        vs = self._places[victim]
        with vs.latch:
            n = len(vs.heap)
            moved = n // 2
            if moved == 0:
                return 0
            ordered = sorted(vs.heap)
            vs.heap[:] = ordered[: n - moved]  # a sorted list is a valid heap
            loot = ordered[n - moved :]
        ts = self._places[thief]
        with ts.latch:
            for _, _, task in loot:
                ts.heap.append((task.key, ts.seq, task))
                ts.seq += 1
            heapify(ts.heap)
        return moved

    def pop(self, place: int) -> Optional[Task]:
        st = self._places[place]
        ctr = self._ctr[place]
        task = self._pop_local(place, st)
        if task is None and self.P > 1:
            rng = self.rngs[place]
            for _ in range(self.P):
                v = rng.randrange(self.P - 1)
                if v >= place:
                    v += 1
                ctr.steals += 1
                if self.steal_half(place, v):
                    task = self._pop_local(place, st)
                    if task is not None:
                        break
        if task is None:
            ctr.spurious += 1
            return None
        ctr.pops += 1
        return task
