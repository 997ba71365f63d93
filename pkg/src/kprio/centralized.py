"""Centralized k-priority backend.

Items live in one global array that grows in fixed-size segments.  A
push drops its item into a random free slot of the window
``[tail, tail + k)`` and advances ``tail`` by ``k`` once the window is
full.  When pushes use different k, a small-k item could otherwise sit
unpublished behind a stream of wide-window pushes, so every item also
carries a deadline: once k newer pushes have completed, ``tail`` is
moved past it, and any empty slots on the way are filled with a hole.  Every place scans the array from its private ``head`` up to
``tail`` into a local binary heap of item references, and takes an item
by swapping its tag from the slot index to ``TAKEN``.  Items beyond
``tail`` are only visible to the place that pushed them, plus whatever a
single random probe finds.
"""

from __future__ import annotations

import threading
from heapq import heappop, heappush
from typing import Optional

from .core import Backend, SchedulerConfig, Task

SEGMENT_SHIFT = 12
SEGMENT_SIZE = 1 << SEGMENT_SHIFT  # 4096, a multiple of k_max
TAKEN = -1


class Item:
    """Envelope stored in the global array.

    ``tag`` equals the item's slot index while the task is live and
    ``TAKEN`` otherwise.  Items are recycled, and slot indices only grow,
    so a stale reference can never match a recycled item's tag.
    """

    __slots__ = ("task", "key", "place", "k", "tag", "_lock")

    def __init__(self) -> None:
        self.task: Optional[Task] = None
        self.key = 0.0
        self.place = -1
        self.k = 0
        self.tag = TAKEN
        self._lock = threading.Lock()

    def take(self, expected: int) -> bool:
        with self._lock:
            if self.tag == expected:
                self.tag = TAKEN
                return True
            return False


HOLE = Item()  # fills skipped slots; its tag never matches a position


class Segment:
    __slots__ = ("number", "base", "slots", "refcount", "taken", "_lock")

    def __init__(self) -> None:
        self.number = -1
        self.base = -1
        self.slots: list[Optional[Item]] = [None] * SEGMENT_SIZE
        self.refcount = 0
        self.taken = 0
        self._lock = threading.Lock()

    def reset(self, number: int, places: int) -> None:
        self.number = number
        self.base = number << SEGMENT_SHIFT
        self.refcount = places
        self.taken = 0

    def cas_slot(self, pos: int, item: Item) -> bool:
        # The tag is published together with the slot so that a recycled
        # item never advertises a position it does not occupy.
        with self._lock:
            i = pos - self.base
            if 0 <= i < SEGMENT_SIZE and self.slots[i] is None:
                item.tag = pos
                self.slots[i] = item
                return True
            return False

    def fill_hole(self, pos: int) -> bool:
        """Mark an empty slot as permanently taken; True if this call filled it."""
        with self._lock:
            i = pos - self.base
            if 0 <= i < SEGMENT_SIZE and self.slots[i] is None:
                self.slots[i] = HOLE
                return True
            return False

    def read(self, pos: int) -> Optional[Item]:
        i = pos - self.base
        if 0 <= i < SEGMENT_SIZE:
            return self.slots[i]
        return None


class _Place:
    __slots__ = ("heap", "head", "released", "seq", "free")

    def __init__(self) -> None:
        self.heap: list = []
        self.head = 0
        self.released = 0  # segments [0, released) no longer scanned by this place
        self.seq = 0
        self.free: list[Item] = []


class CentralizedKPriority(Backend):
    name = "central"

    def __init__(self, config: SchedulerConfig) -> None:
        super().__init__(config)
        self._tail_value = 0
        self._tail_lock = threading.Lock()
        self._segments: dict[int, Segment] = {}
        self._max_segment = -1
        self._grow_lock = threading.Lock()
        self._pool: list[Segment] = []
        self.segments_reclaimed = 0
        self._places = [_Place() for _ in range(config.P)]
        self._deadlines: list[tuple[int, int]] = []  # (push count due, slot)
        self._push_count = 0
        self._deadline_lock = threading.Lock()

    # -- global state -------------------------------------------------------

    @property
    def tail(self) -> int:
        return self._tail_value

    def _cas_tail(self, expected: int, desired: int) -> bool:
        with self._tail_lock:
            if self._tail_value == expected:
                self._tail_value = desired
                return True
            return False

    def live_segments(self) -> int:
        return len(self._segments)

    def _segment(self, number: int) -> Optional[Segment]:
        seg = self._segments.get(number)
        if seg is not None:
            return seg
        with self._grow_lock:
            seg = self._segments.get(number)
            if seg is not None or number <= self._max_segment:
                return seg  # None here means already reclaimed
            for n in range(self._max_segment + 1, number + 1):
                fresh = self._pool.pop() if self._pool else Segment()
                fresh.reset(n, self.P)
                self._segments[n] = fresh
            self._max_segment = number
            return self._segments[number]

    def _release(self, number: int) -> None:
        seg = self._segments[number]
        with seg._lock:
            seg.refcount -= 1
            done = seg.refcount == 0 and seg.taken == SEGMENT_SIZE
        if done:
            self._reclaim(seg)

    def _on_taken(self, pos: int) -> None:
        seg = self._segments[pos >> SEGMENT_SHIFT]
        with seg._lock:
            seg.taken += 1
            done = seg.refcount == 0 and seg.taken == SEGMENT_SIZE
        if done:
            self._reclaim(seg)

    def _reclaim(self, seg: Segment) -> None:
        with self._grow_lock:
            del self._segments[seg.number]
            with seg._lock:
                seg.base = -1
                seg.number = -1
                seg.slots[:] = [None] * SEGMENT_SIZE
            self._pool.append(seg)
            self.segments_reclaimed += 1

    def _window(self, k: int) -> int:
        # k = 0 uses a one-slot window and then publishes immediately
        return k if k > 0 else 1

    # -- operations ---------------------------------------------------------

    def push(self, place: int, k: int, task: Task) -> None:
        if not 0 <= k <= self.k_max:
            self._check_k(k)
        st = self._places[place]
        it = st.free.pop() if st.free else Item()
        it.task = task
        it.key = task.key
        it.place = place
        it.k = k
        w = self._window(k)
        rng = self.rngs[place]
        hook = self.yield_hook
        while True:
            t = self._tail_value
            offset = rng.randrange(w) if w > 1 else 0
            for i in range(offset, offset + w):
                pos = t + (i % w)
                seg = self._segment(pos >> SEGMENT_SHIFT)
                if seg is not None and seg.cas_slot(pos, it):
                    if hook is not None:
                        hook(place, "central.push.placed")
                    heappush(st.heap, (task.key, st.seq, pos, it))
                    st.seq += 1
                    self._ctr[place].pushes += 1
                    if k == 0:
                        self._publish_through(pos)
                    self._note_push(pos, w)
                    return
            if hook is not None:
                hook(place, "central.push.window_full")
            self._cas_tail(t, t + w)

    def _note_push(self, pos: int, w: int) -> None:
        with self._deadline_lock:
            now = self._push_count
            self._push_count = now + 1
            dl = self._deadlines
            heappush(dl, (now + w, pos))
            due = -1
            while dl and dl[0][0] <= now:
                due = max(due, heappop(dl)[1])
        if due >= self._tail_value:
            self._publish_through(due)

    def _publish_through(self, pos: int) -> None:
        """Advance ``tail`` past ``pos``, filling empty slots below it with holes."""
        for q in range(self._tail_value, pos):
            seg = self._segment(q >> SEGMENT_SHIFT)
            if seg is not None and seg.fill_hole(q):
                self._on_taken(q)
        while True:
            t = self._tail_value
            if t > pos or self._cas_tail(t, pos + 1):
                return

    def _scan(self, st: _Place, place: int) -> None:
        tail = self._tail_value
        head = st.head
        if head >= tail:
            return
        heap = st.heap
        seq = st.seq
        while head < tail:
            number = head >> SEGMENT_SHIFT
            seg = self._segments[number]
            base = seg.base
            slots = seg.slots
            end = min(tail, base + SEGMENT_SIZE)
            for pos in range(head, end):
                it = slots[pos - base]
                if it.tag == pos and it.place != place:
                    heappush(heap, (it.key, seq, pos, it))
                    seq += 1
            head = end
        st.seq = seq
        st.head = head
        while (st.released + 1) << SEGMENT_SHIFT <= head:
            self._release(st.released)
            st.released += 1

    def pop(self, place: int) -> Optional[Task]:
        st = self._places[place]
        heap = st.heap
        ctr = self._ctr[place]
        hook = self.yield_hook
        self._scan(st, place)
        while heap:
            _, _, pos, it = heappop(heap)
            task = it.task  # must be read before the take
            if it.tag == pos:
                if hook is not None:
                    hook(place, "central.pop.before_take")
                if it.take(pos):
                    self._on_taken(pos)
                    st.free.append(it)
                    if task.liveness is not None and not task.liveness(task.payload):
                        self._discard_dead(place, task)
                        continue
                    ctr.pops += 1
                    return task
            self._scan(st, place)
        task = self._probe(place)
        if task is None:
            ctr.spurious += 1
        else:
            ctr.pops += 1
        return task

    def _probe(self, place: int) -> Optional[Task]:
        """One random look into the unpublished region after ``tail``."""
        self._ctr[place].steals += 1
        t = self._tail_value
        offset = self.rngs[place].randrange(self.k_max)
        pos = t + offset
        seg = self._segments.get(pos >> SEGMENT_SHIFT)
        if seg is None:
            return None
        it = seg.read(pos)
        if it is None:
            return None
        task = it.task
        if it.tag != pos or offset >= self._window(it.k):
            return None
        if self._tail_value != t:
            return None
        if self.yield_hook is not None:
            self.yield_hook(place, "central.probe.before_take")
        if not it.take(pos):
            return None
        self._on_taken(pos)
        self._places[place].free.append(it)
        if task.liveness is not None and not task.liveness(task.payload):
            self._discard_dead(place, task)
            return None
        return task
