"""Hybrid k-priority backend.

Every place appends new items to a private local list and keeps
references to them in its own heap.  After at most ``k`` further pushes
(per item, tracked through ``remaining_k``) the whole local list is
linked onto a shared, append-only global list.  Places fold newly
published lists into their heaps before every take, and when they run
dry they *spy*: copy references to a victim's unpublished items without
removing anything.  An item is consumed by swapping its tag to
``TAKEN``, so duplicate references are harmless.
"""

from __future__ import annotations

import sys
import threading
from heapq import heappop, heappush
from typing import Optional

from .core import Backend, SchedulerConfig, Task

TAKEN = -1
INFINITY = sys.maxsize


class Block:
    """One local list, stored in place.

    Item ``i`` of the block carries tag ``base + i`` while live, where
    ``base`` is the owner's running item counter when the block was
    opened.  ``length`` is bumped only after the item is fully written,
    so a spy that reads it sees a consistent prefix.
    """

    __slots__ = ("place", "base", "keys", "tasks", "tags", "length", "next", "_lock")

    def __init__(self, place: int, base: int) -> None:
        self.place = place
        self.base = base
        self.keys: list[float] = []
        self.tasks: list[Task] = []
        self.tags: list[int] = []
        self.length = 0
        self.next: Optional[Block] = None
        self._lock = threading.Lock()

    def take(self, i: int, tag: int) -> bool:
        with self._lock:
            if self.tags[i] == tag:
                self.tags[i] = TAKEN
                return True
            return False

    def link(self, successor: "Block") -> bool:
        with self._lock:
            if self.next is None:
                self.next = successor
                return True
            return False

    def live_indices(self) -> list[int]:
        tags = self.tags
        return [i for i in range(self.length) if tags[i] != TAKEN]


class _Place:
    __slots__ = ("heap", "seq", "block", "iterator", "remaining_k", "last_victim", "next_tag")

    def __init__(self, place: int, sentinel: Block) -> None:
        self.heap: list = []
        self.seq = 0
        self.block = Block(place, 0)
        self.iterator = sentinel
        self.remaining_k = INFINITY
        self.last_victim: Optional[int] = None
        self.next_tag = 0


class HybridKPriority(Backend):
    name = "hybrid"

    def __init__(self, config: SchedulerConfig) -> None:
        super().__init__(config)
        self.global_head = Block(-1, 0)
        self._places = [_Place(p, self.global_head) for p in range(config.P)]

    # -- inspection helpers used by tests and the audit harness ---------------

    def local_block(self, place: int) -> Block:
        return self._places[place].block

    def unpublished(self, place: int) -> int:
        return self._places[place].block.length

    def remaining_k(self, place: int) -> int:
        return self._places[place].remaining_k

    def published_blocks(self) -> list[Block]:
        out = []
        b = self.global_head.next
        while b is not None:
            out.append(b)
            b = b.next
        return out

    # -- operations -------------------------------------------------------------

    def push(self, place: int, k: int, task: Task) -> None:
        if not 0 <= k <= self.k_max:
            self._check_k(k)
        st = self._places[place]
        blk = st.block
        i = blk.length
        blk.keys.append(task.key)
        blk.tasks.append(task)
        blk.tags.append(blk.base + i)
        blk.length = i + 1
        st.next_tag += 1
        heappush(st.heap, (task.key, st.seq, blk, i, blk.base + i))
        st.seq += 1
        self._ctr[place].pushes += 1
        if self.yield_hook is not None:
            self.yield_hook(place, "hybrid.push.local")
        remaining = min(st.remaining_k - 1, k)
        if remaining <= 0:
            self._publish(place, st)
        else:
            st.remaining_k = remaining

    def _publish(self, place: int, st: _Place) -> None:
        blk = st.block
        while True:
            self.process_global_list(place)
            if st.iterator.link(blk):
                break
            if self.yield_hook is not None:
                self.yield_hook(place, "hybrid.publish.retry")
        st.block = Block(place, st.next_tag)
        st.remaining_k = INFINITY

    def process_global_list(self, place: int) -> None:
        """Fold every block published since the last call into the heap."""
        st = self._places[place]
        cur = st.iterator
        nxt = cur.next
        if nxt is None:
            return
        heap = st.heap
        seq = st.seq
        while nxt is not None:
            if nxt.place != place:
                tags = nxt.tags
                keys = nxt.keys
                base = nxt.base
                for i in range(nxt.length):
                    if tags[i] != TAKEN:
                        heappush(heap, (keys[i], seq, nxt, i, base + i))
                        seq += 1
            cur = nxt
            nxt = cur.next
        st.seq = seq
        st.iterator = cur

    def pop(self, place: int) -> Optional[Task]:
        st = self._places[place]
        heap = st.heap
        ctr = self._ctr[place]
        hook = self.yield_hook
        self.process_global_list(place)
        while True:
            while heap:
                _, _, blk, i, tag = heappop(heap)
                if blk.tags[i] == tag:
                    task = blk.tasks[i]
                    if hook is not None:
                        hook(place, "hybrid.pop.before_take")
                    if blk.take(i, tag):
                        if task.liveness is not None and not task.liveness(task.payload):
                            self._discard_dead(place, task)
                            continue
                        ctr.pops += 1
                        return task
                self.process_global_list(place)
            if self.P == 1 or not self.spy(place):
                break
        ctr.spurious += 1
        return None

    def spy(self, place: int) -> bool:
        """Copy references to one victim's unpublished live items.

        The victim is drawn uniformly from the other places; if it has
        nothing local, its own last successful victim is tried instead,
        for at most ``P`` hops.  Returns whether any reference was added.
        """
        st = self._places[place]
        self._ctr[place].steals += 1
        v = self.rngs[place].randrange(self.P - 1)
        if v >= place:
            v += 1
        heap = st.heap
        for _ in range(self.P):
            victim = self._places[v]
            blk = victim.block
            tags = blk.tags
            keys = blk.keys
            base = blk.base
            added = 0
            for i in range(blk.length):
                if tags[i] != TAKEN:
                    heappush(heap, (keys[i], st.seq, blk, i, base + i))
                    st.seq += 1
                    added += 1
            if added:
                st.last_victim = v
                return True
            nxt = victim.last_victim
            if nxt is None or nxt == place or nxt == v:
                return False
            v = nxt
        return False
