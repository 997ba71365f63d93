"""Command-line driver: graph generation, SSSP benchmarks, simulation, bounds and audits.

Exit codes: 0 success, 1 validation or oracle failure, 2 bad arguments,
3 liveness timeout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from . import BACKENDS, K_MAX, ConfigurationError, QuiescenceTimeout, SchedulerConfig, make_backend
from .audit import CSV_VERSION, concurrent_stress, frozen_worker_check, sequential_audit
from .centralized import CentralizedKPriority

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TIMEOUT = 0, 1, 2, 3
K_SWEEP = (1, 8, 32, 128, 512, 2048)
SSSP_COLUMNS = ("backend", "n", "p", "threads", "k", "seed", "rep", "time_ms", "relaxations", "dead_tasks", "pushes")


class ValidationFailure(Exception):
    pass


def default_threads() -> int:
    raw = os.environ.get("KPRIO_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"KPRIO_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError("KPRIO_THREADS must be >= 1")
    return value


@contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _csv(fh, columns):
    fh.write(CSV_VERSION + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    return w


# -- commands -----------------------------------------------------------------------


def cmd_gen_graph(args) -> int:
    from .sssp import generate_graph, write_graph

    g = generate_graph(args.n, args.p, args.seed, args.epsilon)
    with _output(args.out) as fh:
        write_graph(g, fh)
    return EXIT_OK


def _load_graph(args):
    from .sssp import generate_graph, read_graph

    if args.graph:
        return read_graph(args.graph)
    if args.n is None or args.p is None:
        raise ConfigurationError("give either --graph FILE or both --n and --p")
    return generate_graph(args.n, args.p, args.graph_seed)


def cmd_sssp(args) -> int:
    from .phasesim import edge_probability
    from .sssp import choose_source, dijkstra_oracle, run_sssp

    graph = _load_graph(args)
    p = args.p if args.p is not None else edge_probability(graph)
    backends = sorted(BACKENDS) if args.backend == "all" else [args.backend]
    ks = K_SWEEP if args.k_sweep else (args.k,)
    threads = args.threads if args.threads is not None else default_threads()
    oracles: dict[int, np.ndarray] = {}
    with _output(args.out) as fh:
        w = _csv(fh, SSSP_COLUMNS)
        for rep in range(args.reps):
            s = choose_source(graph.n, args.seed + rep) if args.source is None else args.source
            if s not in oracles:
                oracles[s] = dijkstra_oracle(graph, s)
            for name in backends:
                for k in ks:
                    cfg = SchedulerConfig(P=threads, k_default=k, k_max=max(K_MAX, k), seed=args.seed * 1009 + rep)
                    res = run_sssp(graph, s, make_backend(name, cfg), cfg, timeout=args.timeout)
                    if not np.array_equal(res.distances, oracles[s]):
                        bad = int(np.count_nonzero(res.distances != oracles[s]))
                        raise ValidationFailure(f"{name} k={k} rep={rep}: {bad} distances differ from the oracle")
                    w.writerow([name, graph.n, p, threads, k, args.seed, rep,
                                f"{res.wall_time * 1e3:.3f}", res.relaxations, res.dead_tasks, res.pushes])
                    fh.flush()
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .phasesim import CSV_COLUMNS, simulate
    from .sssp import choose_source, generate_graph

    graph = generate_graph(args.n, args.p, args.seed)
    s = choose_source(graph.n, args.seed)
    with _output(args.out) as fh:
        w = _csv(fh, CSV_COLUMNS)
        for ph in simulate(graph, s, args.places, args.rho, args.seed):
            w.writerow(ph.row())
    return EXIT_OK


def cmd_bound(args) -> int:
    from .theory import BoundInput, simple_bound, useless_work_bound

    d = np.array([float(x) for x in args.d.split(",")]) if args.d else np.zeros(0)
    relaxed = [int(x) for x in args.relaxed.split(",")] if args.relaxed else list(range(min(d.size, args.places)))
    inp = BoundInput(args.n, args.p, d, relaxed)
    out = simple_bound(inp, args.h_star) if args.simple else useless_work_bound(inp)
    with _output(args.out) as fh:
        w = _csv(fh, ("index", "q"))
        for j, q in zip(inp.relaxed.tolist(), out.q.tolist()):
            w.writerow([j, repr(q)])
        fh.write(f"# W_upper={out.W_upper!r} max_L={out.max_L}\n")
    return EXIT_OK


class _WiderWindow(CentralizedKPriority):
    """Deliberately broken variant: places items one slot beyond the window."""

    name = "central-mutant"

    def _window(self, k: int) -> int:
        return super()._window(k) + 1


def _factory(name: str, mutate: bool):
    if mutate:
        if name not in ("central", "central-k"):
            raise ConfigurationError("--mutate-window applies to the central backend only")
        return _WiderWindow
    return lambda cfg: make_backend(name, cfg)


def cmd_audit(args) -> int:
    threads = args.threads if args.threads is not None else default_threads()
    factory = _factory(args.backend, args.mutate_window)
    if args.mode == "sequential":
        discipline = {"central": "central", "central-k": "central", "hybrid": "hybrid", "hybrid-k": "hybrid"}.get(
            args.backend
        )
        if discipline is None:
            raise ConfigurationError("sequential audits need a k-priority backend (central or hybrid)")
        backend = factory(SchedulerConfig(P=threads, k_default=args.k, seed=args.seed))
        ks = tuple(int(x) for x in args.k_choices.split(",")) if args.k_choices else (args.k,)
        res = sequential_audit(backend, discipline, args.ops, args.seed, k_choices=ks)
        print(f"sequential audit {args.backend}: {'PASS' if res.passed else 'FAIL'} ops={res.ops} pops={res.pops} {res.message}")
    elif args.mode == "stress":
        res = concurrent_stress(factory, threads, args.ops, args.seed, k=args.k, timeout=args.timeout)
        if not res.passed and res.message.startswith("timeout"):
            print(f"stress {args.backend}: TIMEOUT {res.message}")
            return EXIT_TIMEOUT
        print(f"stress {args.backend}: {'PASS' if res.passed else 'FAIL'} consumed={res.consumed} "
              f"duplicates={res.duplicates} missing={res.missing} {res.seconds:.2f}s {res.message}")
    else:
        res = frozen_worker_check(factory, threads, args.ops, args.seed, k=args.k)
        print(f"frozen-worker {args.backend}: {'PASS' if res.passed else 'FAIL'} place={res.frozen_place} "
              f"at={res.frozen_label} {res.seconds:.2f}s (baseline {res.baseline_seconds:.2f}s) {res.message}")
        if not res.passed and "drain" in res.message:
            return EXIT_TIMEOUT
    return EXIT_OK if res.passed else EXIT_FAIL


# -- argument parsing -------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kprio", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    backend_names = sorted(BACKENDS) + ["central-k", "hybrid-k", "work-stealing"]

    g = sub.add_parser("gen-graph", help="write a random weighted graph")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=0.1)
    g.add_argument("--out", help="output file (default stdout)")
    g.set_defaults(func=cmd_gen_graph)

    s = sub.add_parser("sssp", help="benchmark parallel SSSP, checking every run against Dijkstra")
    s.add_argument("--graph", help="graph file written by gen-graph")
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--p", type=float)
    s.add_argument("--graph-seed", type=int, default=0)
    s.add_argument("--backend", choices=backend_names + ["all"], default="all")
    s.add_argument("--threads", type=_positive_int, help="places (default $KPRIO_THREADS or 1)")
    s.add_argument("--k", type=_nonneg_int, default=64)
    s.add_argument("--k-sweep", action="store_true", help="run k in " + ",".join(map(str, K_SWEEP)))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--source", type=_nonneg_int)
    s.add_argument("--reps", type=_positive_int, default=1)
    s.add_argument("--timeout", type=float, default=300.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sssp)

    m = sub.add_parser("simulate", help="per-phase CSV from the phase model")
    m.add_argument("--n", type=_positive_int, required=True)
    m.add_argument("--p", type=float, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--places", "-P", type=_positive_int, default=80)
    m.add_argument("--rho", type=_nonneg_int, default=0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bound", help="evaluate the useless-work bound for given distances")
    b.add_argument("--n", type=_positive_int, required=True)
    b.add_argument("--p", type=float, required=True)
    b.add_argument("--d", required=True, help="comma-separated ascending tentative distances")
    b.add_argument("--relaxed", help="comma-separated relaxed positions (default the first --places)")
    b.add_argument("--places", "-P", type=_positive_int, default=80)
    b.add_argument("--simple", action="store_true", help="use one spread value for every pair")
    b.add_argument("--h-star", type=float)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    a = sub.add_parser("audit", help="check a backend's relaxation and exactly-once guarantees")
    a.add_argument("--backend", choices=backend_names, required=True)
    a.add_argument("--mode", choices=("sequential", "stress", "frozen"), default="sequential")
    a.add_argument("--ops", type=_positive_int, default=100_000, help="operations (sequential) or tasks")
    a.add_argument("--threads", type=_positive_int)
    a.add_argument("--k", type=_nonneg_int, default=8)
    a.add_argument("--k-choices", help="comma-separated k values drawn per push (sequential mode)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--timeout", type=float, default=600.0)
    a.add_argument("--mutate-window", action="store_true", help="audit a deliberately broken central variant")
    a.set_defaults(func=cmd_audit)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"kprio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        print(f"kprio: validation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except QuiescenceTimeout as exc:
        print(f"kprio: timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (OSError, ValueError) as exc:
        print(f"kprio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
