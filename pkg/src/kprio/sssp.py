"""Parallel single-source shortest paths on the task scheduler.

Each node relaxation is a task keyed by the node's tentative distance.
Distances only ever decrease, through a compare-and-swap loop, and a
task whose distance has since been improved is dead: the backend may
drop it on sight, and the task body skips it otherwise.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO, Union

import numpy as np

from .atomics import StripedLocks
from .core import Backend, ConfigurationError, SchedulerConfig, Task, run_to_quiescence

DEFAULT_EPSILON = 0.1


@dataclass
class Graph:
    """Undirected weighted graph; edges stored once (u < v) plus CSR adjacency."""

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    p: Optional[float] = None

    @property
    def m(self) -> int:
        return int(self.u.size)

    @classmethod
    def from_edges(cls, n: int, u, v, w) -> "Graph":
        u, v = np.asarray(u), np.asarray(v)
        w = np.asarray(w, dtype=np.float64)
        if not (u.size == v.size == w.size):
            raise ConfigurationError("edge arrays differ in length")
        if u.size:
            if u.dtype.kind not in "iu" or v.dtype.kind not in "iu":
                raise ConfigurationError("edge endpoints must be integers")
            if (u == v).any():
                raise ConfigurationError("self-loops are not allowed")
            if min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n:
                raise ConfigurationError("edge endpoint out of range")
            if not ((w > 0) & (w <= 1)).all():
                raise ConfigurationError("edge weights must lie in (0, 1]")
        itype = np.int32 if n < 2**31 else np.int64
        u = u.astype(itype, copy=False)
        v = v.astype(itype, copy=False)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        m = lo.size
        src = np.concatenate([lo, hi])
        order = np.lexsort((np.concatenate([hi, lo]), src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        del src
        # adjacency entry e < m is edge e seen from lo, entry m + e from hi
        flipped = order >= m
        np.subtract(order, m, out=order, where=flipped)
        indices = hi[order]
        indices[flipped] = lo[order[flipped]]
        weights = w[order]
        return cls(n=n, u=lo, v=hi, w=w, indptr=indptr, indices=indices, weights=weights)

    def neighbors(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[node], self.indptr[node + 1]
        return self.indices[a:b], self.weights[a:b]


def connectivity_threshold(n: int, epsilon: float = DEFAULT_EPSILON) -> float:
    return (1 + epsilon) * math.log(n) / n if n > 1 else 0.0


def generate_graph(n: int, p: float, seed: int, epsilon: float = DEFAULT_EPSILON) -> Graph:
    """Erdős-Rényi G(n, p) with independent edge weights uniform on (0, 1]."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if not 0 < p <= 1:
        raise ConfigurationError(f"p must lie in (0, 1], got {p}")
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    thr = connectivity_threshold(n, epsilon)
    if p <= thr:
        raise ConfigurationError(f"p={p} does not exceed the connectivity threshold {thr:.6g} for n={n}")
    rng = np.random.default_rng(seed)
    us, vs = [], []
    for a in range(n - 1):
        hit = np.flatnonzero(rng.random(n - a - 1) < p).astype(np.int32)
        if hit.size:
            us.append(np.full(hit.size, a, dtype=np.int32))
            vs.append(hit + np.int32(a + 1))
    u = np.concatenate(us) if us else np.zeros(0, dtype=np.int32)
    v = np.concatenate(vs) if vs else np.zeros(0, dtype=np.int32)
    del us, vs
    w = 1.0 - rng.random(u.size)  # (0, 1]: zero excluded
    g = Graph.from_edges(n, u, v, w)
    g.p = p
    return g


def choose_source(n: int, seed: int) -> int:
    return int(np.random.default_rng([seed, 0x5EED]).integers(n))


# -- file format --------------------------------------------------------------------


def format_weight(w: float) -> str:
    # 17 significant digits round-trip any double exactly
    return np.format_float_positional(w, precision=17, unique=False, fractional=False, trim="k")


def write_graph(graph: Graph, dest: Union[str, Path, TextIO]) -> None:
    """Header ``n m`` then one ``u v w`` line per edge with ``u < v``."""
    if not hasattr(dest, "write"):
        with open(dest, "w") as fh:
            write_graph(graph, fh)
        return
    dest.write(f"{graph.n} {graph.m}\n")
    for a, b, w in zip(graph.u.tolist(), graph.v.tolist(), graph.w.tolist()):
        dest.write(f"{a} {b} {format_weight(w)}\n")


def read_graph(path: Union[str, Path]) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigurationError(f"{path}: first line must be 'n m'")
        n, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2) if m else np.zeros((0, 3))
    if data.shape != (m, 3):
        raise ConfigurationError(f"{path}: expected {m} edge lines, found {data.shape[0]}")
    u = data[:, 0].astype(np.int64)
    v = data[:, 1].astype(np.int64)
    if m and not (u < v).all():
        raise ConfigurationError(f"{path}: edges must satisfy u < v")
    return Graph.from_edges(n, u, v, data[:, 2])


# -- sequential oracles ------------------------------------------------------------


def dijkstra_oracle(graph: Graph, s: int) -> np.ndarray:
    """Exact distances from ``s``; unreachable nodes are ``inf``."""
    dist = np.full(graph.n, np.inf)
    dist[s] = 0.0
    settled = np.zeros(graph.n, dtype=bool)
    heap = [(0.0, s)]
    indptr, indices, weights = graph.indptr, graph.indices, graph.weights
    while heap:
        d, x = heapq.heappop(heap)
        if settled[x]:
            continue
        settled[x] = True
        a, b = indptr[x], indptr[x + 1]
        tg = indices[a:b]
        nd = d + weights[a:b]
        better = nd < dist[tg]
        if better.any():
            tg, nd = tg[better], nd[better]
            dist[tg] = nd
            for t, dd in zip(tg.tolist(), nd.tolist()):
                heapq.heappush(heap, (dd, t))
    return dist


def bellman_ford(graph: Graph, s: int) -> np.ndarray:
    """Synchronous Bellman-Ford rounds; independent cross-check for small graphs."""
    dist = np.full(graph.n, np.inf)
    dist[s] = 0.0
    src = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    for _ in range(graph.n):
        cand = dist[src] + graph.weights
        new = dist.copy()
        np.minimum.at(new, graph.indices, cand)
        if np.array_equal(new, dist):
            break
        dist = new
    return dist


# -- parallel relaxation -------------------------------------------------------------


@dataclass
class SsspResult:
    distances: np.ndarray
    relaxations: int
    dead_tasks: int
    pushes: int
    wall_time: float
    backend: str = ""


class _Relaxer:
    """Holds the shared distance cells and the relaxation task body."""

    def __init__(self, graph: Graph, P: int) -> None:
        self.graph = graph
        self.dist = np.full(graph.n, np.inf)
        self.locks = StripedLocks(4096)
        self.relaxed = [0] * P
        self.dead = [0] * P
        dist = self.dist
        self.alive = lambda payload: dist[payload[0]] == payload[1]

    def cas(self, node: int, expected: float, desired: float) -> bool:
        with self.locks[node]:
            if self.dist[node] == expected:
                self.dist[node] = desired
                return True
            return False

    def relax(self, payload, worker) -> None:
        node, d = payload
        dist = self.dist
        if dist[node] != d:
            # improved since this task was spawned
            self.dead[worker.place] += 1
            return
        self.relaxed[worker.place] += 1
        g = self.graph
        a, b = g.indptr[node], g.indptr[node + 1]
        targets = g.indices[a:b]
        new_d = d + g.weights[a:b]
        hit = np.flatnonzero(new_d < dist[targets])
        if not hit.size:
            return
        cas, spawn, relax, alive = self.cas, worker.spawn, self.relax, self.alive
        for t, nd in zip(targets[hit].tolist(), new_d[hit].tolist()):
            old = dist[t]
            while old > nd:
                if cas(t, old, nd):
                    spawn(nd, relax, (t, nd), None, alive)
                    break
                old = dist[t]


def relax_node_task(relaxer: _Relaxer, node: int, distance: float, worker) -> None:
    relaxer.relax((node, distance), worker)


def run_sssp(
    graph: Graph,
    s: int,
    backend: Backend,
    config: SchedulerConfig,
    *,
    timeout: float = 120.0,
    switch_interval: Optional[float] = None,
) -> SsspResult:
    """Solve SSSP from ``s`` with every relaxation scheduled on ``backend``."""
    if not 0 <= s < graph.n:
        raise ConfigurationError(f"source {s} out of range")
    rx = _Relaxer(graph, config.P)
    rx.dist[s] = 0.0
    root = Task(0.0, (s, 0.0), rx.relax, None, rx.alive)
    t0 = time.monotonic()
    stats = run_to_quiescence(root, config, backend, timeout=timeout, switch_interval=switch_interval)
    wall = time.monotonic() - t0
    return SsspResult(
        distances=rx.dist,
        relaxations=sum(rx.relaxed),
        dead_tasks=sum(rx.dead) + stats.dead_tasks_eliminated,
        pushes=stats.pushes,
        wall_time=wall,
        backend=backend.name,
    )
