"""Single-word atomic primitives.

CPython exposes no compare-and-swap, so each atomic cell carries a
``threading.Lock`` held only for the duration of one read-modify-write.
No lock is ever held across two cells or across user code, so the
progress argument of a lock-free algorithm built on these cells carries
over unchanged: a thread suspended *between* atomic steps never blocks
anyone else.
"""

from __future__ import annotations

import threading
from typing import Generic, TypeVar

T = TypeVar("T")


class AtomicInt:
    """Atomic integer with load/store/CAS/fetch-add."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value: int = 0) -> None:
        self._value = value
        self._lock = threading.Lock()

    def load(self) -> int:
        # a plain attribute read is atomic under the interpreter
        return self._value

    def store(self, value: int) -> None:
        with self._lock:
            self._value = value

    def compare_and_swap(self, expected: int, desired: int) -> bool:
        with self._lock:
            if self._value == expected:
                self._value = desired
                return True
            return False

    def fetch_add(self, delta: int) -> int:
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def __repr__(self) -> str:
        return f"AtomicInt({self._value})"


class AtomicRef(Generic[T]):
    """Atomic reference cell; CAS compares by identity."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value: T) -> None:
        self._value = value
        self._lock = threading.Lock()

    def load(self) -> T:
        return self._value

    def store(self, value: T) -> None:
        with self._lock:
            self._value = value

    def compare_and_swap(self, expected: T, desired: T) -> bool:
        with self._lock:
            if self._value is expected:
                self._value = desired
                return True
            return False


class StripedLocks:
    """A fixed pool of locks addressed by integer index.

    Used where one lock per cell would be too much memory, e.g. the
    distance cells of a large graph.  Two cells sharing a stripe only
    serialise their CAS instructions; they never nest.
    """

    __slots__ = ("_locks", "_mask")

    def __init__(self, n_stripes: int = 1024) -> None:
        if n_stripes & (n_stripes - 1):
            raise ValueError("n_stripes must be a power of two")
        self._locks = [threading.Lock() for _ in range(n_stripes)]
        self._mask = n_stripes - 1

    def __getitem__(self, index: int) -> threading.Lock:
        return self._locks[index & self._mask]
