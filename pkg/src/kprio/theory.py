"""Useless-work bound for phase-wise SSSP on random graphs, and the path-weight results it rests on.

For candidate nodes with ascending tentative distances ``d`` the
probability that node ``j`` is settled is bounded below by

    q(j) >= prod_{i<j} prod_{L=1}^{n-1} (1 - r(L, h_ij)) ** E(L)

with ``h_ij = d[j] - d[i]``, ``r(L, h) = (p h)^L / L!`` and
``E(L) = (n-2)(n-3)...(n-L)`` the number of length-``L`` paths between
two fixed nodes.  Everything is evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core import ConfigurationError

TRUNCATION = 1e-15
L_CHUNK = 64
# exp(-800) is zero in double precision, so q saturates there
SATURATED = 800.0


@dataclass
class BoundInput:
    n: int
    p: float
    d: np.ndarray
    relaxed: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        self.relaxed = np.asarray(self.relaxed, dtype=np.int64)
        if self.n < 2:
            raise ConfigurationError("n must be >= 2")
        if not 0 <= self.p <= 1:
            raise ConfigurationError(f"p must lie in [0, 1], got {self.p}")
        if self.d.ndim != 1 or not np.isfinite(self.d).all():
            raise ConfigurationError("d must be a finite 1-d sequence")
        if np.any(np.diff(self.d) < 0):
            raise ConfigurationError("d must be sorted ascending")
        if self.relaxed.size:
            if self.relaxed.min() < 0 or self.relaxed.max() >= self.d.size:
                raise ConfigurationError("relaxed index out of range")
            if np.unique(self.relaxed).size != self.relaxed.size:
                raise ConfigurationError("relaxed indices must be distinct")


@dataclass
class BoundOutput:
    W_upper: float
    q: np.ndarray
    max_L: int = 0
    log_q: np.ndarray = field(default_factory=lambda: np.zeros(0))


@lru_cache(maxsize=16)
def _log_path_counts(n: int) -> np.ndarray:
    """log E(L) for L = 0..n-1, where E(L) = (n-2)!/(n-1-L)!; index 0 unused."""
    out = np.zeros(n)
    if n > 2:
        out[2:] = np.cumsum(np.log(n - np.arange(2, n, dtype=np.float64)))
    return out


def log_r_tilde(L, h, p: float):
    """log of (p h)^L / L!."""
    L = np.asarray(L, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return L * np.log(p * np.asarray(h, dtype=np.float64)) - gammaln(L + 1)


def _log_term(log_e: np.ndarray, lr: np.ndarray) -> np.ndarray:
    """log of E(L) * -log1p(-r); +inf once r >= 1."""
    with np.errstate(divide="ignore", invalid="ignore"):
        # -log1p(-r) ~ r for tiny r, and exp(lr) would underflow there
        exact = np.log(-np.log1p(-np.exp(np.minimum(lr, 0.0))))
        lt = np.where(lr < -30, lr, exact)
    lt = np.where(lr >= 0, np.inf, lt)
    return log_e + lt


def log_settle_factor(h: np.ndarray, n: int, p: float) -> tuple[np.ndarray, int]:
    """Sum over L of E(L) * -log1p(-r(L, h)) for each entry of ``h``.

    Returns the (non-negative) totals, saturated at ``SATURATED``, and
    the largest L evaluated.  ``h`` must already be clamped to [0, 1].
    """
    h = np.asarray(h, dtype=np.float64)
    total = np.zeros(h.shape)
    live = np.flatnonzero((h > 0) & (p > 0))
    if live.size == 0:
        return total, 0
    log_e = _log_path_counts(n)
    hv = h[live]
    acc = np.zeros(hv.size)
    prev_last = np.full(hv.size, -np.inf)
    L0 = 1
    max_L = 0
    while live.size and L0 <= n - 1:
        Ls = np.arange(L0, min(L0 + L_CHUNK, n))
        lr = log_r_tilde(Ls[None, :], hv[:, None], p)
        lt = _log_term(log_e[Ls][None, :], lr)
        with np.errstate(over="ignore"):
            acc = acc + np.exp(np.minimum(lt, 1000.0)).sum(axis=1)
        max_L = int(Ls[-1])
        last = lt[:, -1]
        if Ls.size > 1:
            falling = lt[:, -1] < lt[:, -2]
        else:
            falling = last < prev_last
        done = (acc >= SATURATED) | (falling & (last < math.log(TRUNCATION))) | ~np.isfinite(acc)
        if done.any():
            total[live[done]] = np.minimum(acc[done], SATURATED)
            keep = ~done
            live, hv, acc, prev_last = live[keep], hv[keep], acc[keep], last[keep]
        else:
            prev_last = last
        L0 += L_CHUNK
    if live.size:
        total[live] = np.minimum(acc, SATURATED)
    return total, max_L


def _finish(log_q: np.ndarray, max_L: int) -> BoundOutput:
    q = np.exp(log_q)
    return BoundOutput(W_upper=float(np.sum(1.0 - q)), q=q, max_L=max_L, log_q=log_q)


def useless_work_bound(inp: BoundInput) -> BoundOutput:
    """Upper bound on the expected number of unsettled relaxed nodes.

    ``q[m]`` is the settle-probability lower bound of the node at
    position ``inp.relaxed[m]``; every earlier candidate position counts
    as a potential shortcut.
    """
    d = inp.d
    log_q = np.zeros(inp.relaxed.size)
    max_L = 0
    for m, j in enumerate(inp.relaxed.tolist()):
        if j == 0:
            continue
        h = np.minimum(d[j] - d[:j], 1.0)
        h = h[h > 0]
        if h.size == 0:
            continue
        tot, ml = log_settle_factor(h, inp.n, inp.p)
        max_L = max(max_L, ml)
        log_q[m] = -min(float(tot.sum()), SATURATED)
    return _finish(log_q, max_L)


def default_h_star(inp: BoundInput) -> float:
    if inp.relaxed.size == 0:
        return 0.0
    return float(inp.d[inp.relaxed].max() - inp.d[0])


def simple_bound(inp: BoundInput, h_star: Optional[float] = None) -> BoundOutput:
    """The bound with every pairwise spread replaced by one value ``h_star``."""
    if h_star is None:
        h_star = default_h_star(inp)
    if not 0 <= h_star:
        raise ConfigurationError(f"h_star must be non-negative, got {h_star}")
    h_star = min(float(h_star), 1.0)
    tot, max_L = log_settle_factor(np.array([h_star]), inp.n, inp.p)
    g = float(tot[0])
    log_q = -np.minimum(inp.relaxed.astype(np.float64) * g, SATURATED)
    if g == 0.0:
        log_q = np.zeros(inp.relaxed.size)
    return _finish(log_q, max_L)


# -- path weight distribution ------------------------------------------------------


def _check_lh(L: int, h: float) -> None:
    if L < 1 or int(L) != L:
        raise ConfigurationError(f"L must be a positive integer, got {L}")
    if not 0 < h <= 1:
        raise ConfigurationError(f"h must lie in (0, 1], got {h}")


def path_weight_density(L: int, h: float, lam):
    """Density of a length-``L`` path's weight given both subpaths weigh less than ``h``."""
    _check_lh(L, h)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise ConfigurationError("lambda must be non-negative")
    lo = (lam > 0) & (lam <= h)
    hi = (lam > h) & (lam <= 2 * h)
    if L == 1:
        out = np.where(lo, 1.0 / h, 0.0)
    else:
        out = np.where(lo, lam ** (L - 1) / h**L, 0.0)
        out = np.where(hi, 1.0 / h - (lam - h) ** (L - 1) / h**L, out)
    return out if out.ndim else float(out)


def path_weight_cdf(L: int, h: float, lam):
    _check_lh(L, h)
    lam = np.clip(np.asarray(lam, dtype=np.float64), 0.0, None)
    if L == 1:
        out = np.minimum(lam / h, 1.0)
    else:
        lo = lam**L / (L * h**L)
        x = np.minimum(lam, 2 * h) - h
        hi = 1.0 / L + x / h - x**L / (L * h**L)
        out = np.where(lam <= h, lo, np.minimum(hi, 1.0))
    return out if out.ndim else float(out)


def sample_path_weights(L: int, h: float, size: int, seed: int) -> np.ndarray:
    """Draw path weights by direct construction.

    The first ``L - 1`` edges are uniform on (0, h) and kept only when
    their sum stays below ``h``; the last edge is an independent uniform
    on (0, h).
    """
    _check_lh(L, h)
    rng = np.random.default_rng(seed)
    if L == 1:
        return h * rng.random(size)
    out = np.empty(0)
    accept = 1.0 / math.factorial(L - 1)
    while out.size < size:
        batch = int((size - out.size) / accept * 1.1) + 64
        s = (h * rng.random((batch, L - 1))).sum(axis=1)
        out = np.concatenate([out, s[s < h]])
    return out[:size] + h * rng.random(size)


def conditioned_min_path_prob(L: int) -> float:
    if L < 1:
        raise ConfigurationError(f"L must be >= 1, got {L}")
    return 1.0 / L


def conditioned_min_path_prob_mc(L: int, samples: int = 100_000, seed: int = 0, h: float = 1.0) -> float:
    w = sample_path_weights(L, h, samples, seed)
    return float(np.mean(w < h))


# -- empirical check of the randomness assumption ------------------------------------


@dataclass
class ConjectureReport:
    buckets: np.ndarray
    phase_prob: np.ndarray
    random_prob: np.ndarray
    holds: np.ndarray
    pairs: int

    @property
    def fraction_holding(self) -> float:
        return float(self.holds.mean()) if self.holds.size else 1.0


def _adjacency(graph):
    from scipy.sparse import csr_matrix

    return csr_matrix((graph.weights, graph.indices, graph.indptr), shape=(graph.n, graph.n))


def _pair_distances(graph, nodes: np.ndarray, blocked: np.ndarray) -> np.ndarray:
    """Distances among ``nodes`` (i < j pairs) avoiding every ``blocked`` node."""
    from scipy.sparse.csgraph import dijkstra

    keep = np.flatnonzero(~blocked)
    sub = _adjacency(graph)[keep][:, keep]
    local = np.searchsorted(keep, nodes)
    dist = dijkstra(sub, directed=False, indices=local)[:, local]
    a, b = np.triu_indices(nodes.size, 1)
    return dist[a, b]


def conjecture_probe(
    n: int,
    p: float,
    trials: int,
    seed: int,
    *,
    P: int = 8,
    rho: int = 0,
    n_buckets: int = 20,
    graphs: Optional[int] = None,
) -> ConjectureReport:
    """Compare short-path probabilities for co-relaxed pairs against random pairs.

    Pairs (i < j) are drawn from the relaxed sets of simulated phases,
    and as many uniform node pairs from fresh graphs.  Paths between a
    co-relaxed pair are only counted if they avoid nodes already relaxed
    at their final distance, since no path through such a node can leave
    a node unsettled.  For every threshold ``h`` on a grid over (0, 1]
    the fraction of pairs joined by a path lighter than ``h`` is
    estimated for both populations; the inequality counts as holding
    when the phase estimate does not exceed the random one by more than
    two standard errors.
    """
    from scipy.sparse.csgraph import dijkstra

    from .phasesim import INACTIVE, PhaseSimulator
    from .sssp import choose_source, generate_graph

    if n > 500:
        raise ConfigurationError("conjecture_probe is meant for n <= 500")
    rng = np.random.default_rng(seed)
    graphs = graphs or max(4, trials // 250)
    per_graph = -(-trials // graphs)
    phase_d, rand_d = [], []
    for _ in range(graphs):
        gseed = int(rng.integers(2**31))
        g = generate_graph(n, p, gseed)
        sim = PhaseSimulator(g, choose_source(n, gseed), P, rho, gseed, with_bound=False, record_nodes=True)
        st = sim.state
        phases = iter(sim)
        while True:
            blocked = (st.status == INACTIVE) & np.isfinite(st.delta)
            ph = next(phases, None)
            if ph is None:
                break
            if ph.nodes.size >= 2:
                phase_d.append(_pair_distances(g, ph.nodes, blocked))
        fresh = generate_graph(n, p, gseed + 1)
        fd = dijkstra(_adjacency(fresh), directed=False)
        u = rng.integers(n, size=per_graph)
        v = (u + rng.integers(1, n, size=per_graph)) % n
        rand_d.append(fd[u, v])
    pd_all = np.concatenate(phase_d) if phase_d else np.zeros(0)
    if pd_all.size > trials:
        pd_all = rng.choice(pd_all, size=trials, replace=False)
    rd_all = np.concatenate(rand_d)[:trials]
    buckets = np.linspace(1.0 / n_buckets, 1.0, n_buckets)
    fp = (pd_all[:, None] < buckets[None, :]).mean(axis=0)
    fr = (rd_all[:, None] < buckets[None, :]).mean(axis=0)
    se = np.sqrt(fp * (1 - fp) / max(pd_all.size, 1) + fr * (1 - fr) / max(rd_all.size, 1))
    holds = fp <= fr + 2 * se
    return ConjectureReport(buckets, fp, fr, holds, int(pd_all.size))
