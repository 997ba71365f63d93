"""Phase-model simulator for relaxed priority scheduling of SSSP.

Every phase relaxes up to ``P`` active nodes with the lowest tentative
distances, all simultaneously.  With ``rho > 0`` the ``rho`` most
recently activated nodes are hidden from the sorted array, except for
the global minimum; if the array holds fewer than ``P`` nodes the spare
places relax a random sample of the hidden ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, Optional, TextIO

import numpy as np

from .core import ConfigurationError
from .sssp import Graph, dijkstra_oracle
from .theory import BoundInput, simple_bound, useless_work_bound

INACTIVE = 0
ACTIVE = 1

CSV_COLUMNS = ("phase", "relaxed", "settled", "useless", "h_star", "active_size", "bound_useless")


@dataclass
class PhaseMetrics:
    phase: int
    relaxed: int
    settled: int
    useless: int
    h_star: float
    active_size: int
    bound_useless: float = float("nan")
    bound_pairwise: float = float("nan")
    nodes: Optional[np.ndarray] = None

    def row(self) -> list:
        return [self.phase, self.relaxed, self.settled, self.useless,
                repr(self.h_star), self.active_size, repr(self.bound_useless)]


def order_by_distance(nodes: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Ascending by distance, equal distances by node id."""
    return nodes[np.lexsort((nodes, delta[nodes]))]


class PhaseState:
    def __init__(self, graph: Graph, s: int, rho: int) -> None:
        self.graph = graph
        self.rho = rho
        self.t = 0
        self.delta = np.full(graph.n, np.inf)
        self.delta[s] = 0.0
        self.status = np.zeros(graph.n, dtype=np.int8)
        self.status[s] = ACTIVE
        self.seq = np.full(graph.n, -1, dtype=np.int64)
        self.seq[s] = 0
        self.next_seq = 1

    def active(self) -> np.ndarray:
        return np.flatnonzero(self.status == ACTIVE)

    def split(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (all active sorted, visible array, held out), both sorted by distance."""
        merged = order_by_distance(self.active(), self.delta)
        if self.rho == 0 or merged.size <= 1:
            return merged, merged, merged[:0]
        newest = merged[np.argsort(-self.seq[merged], kind="stable")[: self.rho]]
        held = np.zeros(self.graph.n, dtype=bool)
        held[newest] = True
        held[merged[0]] = False  # the global minimum is always visible
        mask = held[merged]
        return merged, merged[~mask], merged[mask]


def _relax(graph: Graph, delta: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Simultaneous relaxation of ``phi`` against the phase-start distances."""
    starts, ends = graph.indptr[phi], graph.indptr[phi + 1]
    counts = ends - starts
    if counts.sum() == 0:
        return phi[:0], delta[:0]
    idx = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
    targets = graph.indices[idx]
    cand = np.repeat(delta[phi], counts) + graph.weights[idx]
    best = np.full(graph.n, np.inf)
    np.minimum.at(best, targets, cand)
    upd = np.flatnonzero(best < delta)
    return upd, best[upd]


class PhaseSimulator:
    """Iterable phase model; ``delta`` holds the current tentative distances."""

    def __init__(
        self,
        graph: Graph,
        s: int,
        P: int,
        rho: int,
        seed: int,
        *,
        with_bound: bool = True,
        pairwise: bool = False,
        record_nodes: bool = False,
        oracle: Optional[np.ndarray] = None,
        max_phases: Optional[int] = None,
    ) -> None:
        if P < 1:
            raise ConfigurationError(f"P must be >= 1, got {P}")
        if rho < 0:
            raise ConfigurationError(f"rho must be >= 0, got {rho}")
        if not 0 <= s < graph.n:
            raise ConfigurationError(f"source {s} out of range")
        self.graph = graph
        self.P = P
        self.rng = np.random.default_rng(seed)
        self.final = dijkstra_oracle(graph, s) if oracle is None else oracle
        self.state = PhaseState(graph, s, rho)
        self.with_bound = with_bound
        self.pairwise = pairwise
        self.record_nodes = record_nodes
        self.limit = max_phases if max_phases is not None else 10 * graph.n + 10
        self.p = edge_probability(graph)

    @property
    def delta(self) -> np.ndarray:
        return self.state.delta

    def __iter__(self) -> Iterator[PhaseMetrics]:
        st, P, rng = self.state, self.P, self.rng
        delta = st.delta
        while True:
            merged, visible, held = st.split()
            if merged.size == 0:
                return
            if st.t >= self.limit:
                raise RuntimeError(f"simulation exceeded {self.limit} phases")
            phi = visible[:P]
            if phi.size < P and held.size:
                extra = rng.choice(held, size=min(P - phi.size, held.size), replace=False)
                phi = np.concatenate([phi, extra])
            d_phi = delta[phi]
            settled = int(np.count_nonzero(d_phi <= self.final[phi]))
            bound = pairwise = float("nan")
            if self.with_bound:
                pos = np.flatnonzero(np.isin(merged, phi))
                inp = BoundInput(self.graph.n, self.p, delta[merged[: pos.max() + 1]], pos)
                bound = simple_bound(inp).W_upper
                if self.pairwise:
                    pairwise = useless_work_bound(inp).W_upper
            metrics = PhaseMetrics(
                phase=st.t,
                relaxed=int(phi.size),
                settled=settled,
                useless=int(phi.size) - settled,
                h_star=float(d_phi.max() - d_phi.min()),
                active_size=int(merged.size),
                bound_useless=bound,
                bound_pairwise=pairwise,
                nodes=phi.copy() if self.record_nodes else None,
            )
            upd, new_d = _relax(self.graph, delta, phi)
            st.status[phi] = INACTIVE
            delta[upd] = new_d
            st.status[upd] = ACTIVE
            fresh = rng.permutation(upd)  # newly activated nodes get shuffled sequence ids
            st.seq[fresh] = np.arange(st.next_seq, st.next_seq + fresh.size)
            st.next_seq += fresh.size
            st.t += 1
            yield metrics


def simulate(graph: Graph, s: int, P: int, rho: int, seed: int, **options) -> Iterator[PhaseMetrics]:
    """Run the phase model from ``s`` until no node is active, yielding per-phase metrics."""
    return iter(PhaseSimulator(graph, s, P, rho, seed, **options))


def edge_probability(graph: Graph) -> float:
    """The generator's p when known, otherwise the observed edge density."""
    if graph.p is not None:
        return float(graph.p)
    n = graph.n
    return min(1.0, graph.m / (n * (n - 1) / 2)) if n > 1 else 0.0


def write_csv(phases, fh: TextIO, header: str = "# kprio-csv v1") -> int:
    fh.write(header + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    count = 0
    for ph in phases:
        w.writerow(ph.row())
        count += 1
    return count
