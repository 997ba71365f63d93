from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from kprio import ConfigurationError, SchedulerConfig, make_backend
from kprio.sssp import (
    Graph,
    bellman_ford,
    choose_source,
    connectivity_threshold,
    dijkstra_oracle,
    format_weight,
    generate_graph,
    read_graph,
    run_sssp,
    write_graph,
)


def _scipy_distances(g: Graph, s: int) -> np.ndarray:
    mat = csr_matrix((g.weights, g.indices, g.indptr), shape=(g.n, g.n))
    return dijkstra(mat, directed=False, indices=s)


def test_generator_is_deterministic():
    a, b = generate_graph(300, 0.1, 5), generate_graph(300, 0.1, 5)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.w, b.w)
    c = generate_graph(300, 0.1, 6)
    assert not (a.m == c.m and np.array_equal(a.u, c.u))


def test_generator_edge_statistics():
    n, p = 800, 0.1
    g = generate_graph(n, p, 0)
    pairs = n * (n - 1) / 2
    assert abs(g.m - p * pairs) < 5 * math.sqrt(pairs * p * (1 - p))
    assert (g.u < g.v).all()
    assert (g.w > 0).all() and (g.w <= 1).all()
    assert abs(g.w.mean() - 0.5) < 0.01
    assert np.unique(g.u * n + g.v).size == g.m


def test_generator_rejects_p_below_threshold():
    n = 1000
    thr = connectivity_threshold(n)
    assert thr == pytest.approx(1.1 * math.log(n) / n)
    with pytest.raises(ConfigurationError):
        generate_graph(n, thr * 0.99, 0)
    with pytest.raises(ConfigurationError):
        generate_graph(n, 1.5, 0)


def test_two_node_complete_graph_file(tmp_path):
    g = generate_graph(2, 1.0, 0)
    path = tmp_path / "g.txt"
    write_graph(g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "2 1"
    assert len(lines) == 2
    assert lines[1].startswith("0 1 ")


@given(st.floats(min_value=5e-324, max_value=1.0, exclude_min=False))
@settings(max_examples=300)
def test_weight_format_round_trips(w):
    assert float(format_weight(w)) == w


def test_file_round_trip_is_exact(tmp_path):
    g = generate_graph(200, 0.2, 3)
    path = tmp_path / "g.txt"
    write_graph(g, path)
    h = read_graph(path)
    assert h.n == g.n and np.array_equal(h.u, g.u) and np.array_equal(h.v, g.v)
    assert np.array_equal(h.w, g.w)
    buf = io.StringIO()
    write_graph(h, buf)
    assert buf.getvalue() == path.read_text()


@pytest.mark.parametrize(
    "text",
    ["3\n", "3 1\n0 1 0.5\n0 2 0.5\n", "3 1\n1 0 0.5\n", "3 1\n0 1 1.5\n", "3 1\n0 5 0.5\n"],
)
def test_malformed_files_rejected(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        read_graph(path)


@pytest.mark.parametrize("seed", range(4))
def test_oracles_agree(seed):
    g = generate_graph(400, 0.05, seed)
    s = choose_source(g.n, seed)
    ref = dijkstra_oracle(g, s)
    assert np.array_equal(ref, bellman_ford(g, s))
    assert np.allclose(ref, _scipy_distances(g, s), rtol=0, atol=1e-12)


def test_unreachable_nodes_are_infinite():
    g = Graph.from_edges(4, [0, 2], [1, 3], [0.5, 0.25])
    d = dijkstra_oracle(g, 0)
    assert d[1] == 0.5 and math.isinf(d[2]) and math.isinf(d[3])
    cfg = SchedulerConfig(P=2, k_default=4)
    assert np.array_equal(run_sssp(g, 0, make_backend("hybrid", cfg), cfg).distances, d)


def test_path_graph_distances():
    n = 6
    g = Graph.from_edges(n, range(n - 1), range(1, n), [0.5] * (n - 1))
    cfg = SchedulerConfig(P=1)
    res = run_sssp(g, 0, make_backend("central", cfg), cfg)
    assert res.distances.tolist() == [0.5 * i for i in range(n)]
    assert res.relaxations == n and res.dead_tasks == 0


@pytest.mark.parametrize("P", [1, 4])
@pytest.mark.parametrize("k", [0, 64])
def test_parallel_sssp_matches_oracle(backend_name, P, k):
    g = generate_graph(500, 0.1, P + k)
    s = choose_source(g.n, 1)
    cfg = SchedulerConfig(P=P, k_default=k, seed=3)
    res = run_sssp(g, s, make_backend(backend_name, cfg), cfg)
    assert np.array_equal(res.distances, dijkstra_oracle(g, s))
    assert res.pushes == res.relaxations + res.dead_tasks
    assert res.relaxations >= g.n


def test_single_place_exact_queue_does_no_useless_work(backend_name):
    g = generate_graph(400, 0.1, 2)
    cfg = SchedulerConfig(P=1, k_default=0)
    res = run_sssp(g, 0, make_backend(backend_name, cfg), cfg)
    assert res.relaxations == g.n


def test_source_out_of_range():
    g = generate_graph(50, 0.5, 0)
    cfg = SchedulerConfig()
    with pytest.raises(ConfigurationError):
        run_sssp(g, 50, make_backend("ws", cfg), cfg)
