from __future__ import annotations

import csv
import hashlib
import io
import subprocess
import sys

import pytest

from kprio.cli import EXIT_FAIL, EXIT_OK, EXIT_TIMEOUT, EXIT_USAGE, SSSP_COLUMNS, main
from kprio.phasesim import CSV_COLUMNS


def _rows(text: str) -> list[dict]:
    lines = text.splitlines()
    assert lines[0] == "# kprio-csv v1"
    return list(csv.DictReader(ln for ln in lines[1:] if not ln.startswith("#")))


def test_gen_graph_is_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["gen-graph", "--n", "1000", "--p", "0.1", "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["gen-graph", "--n", "1000", "--p", "0.1", "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_gen_graph_two_nodes(capsys):
    assert main(["gen-graph", "--n", "2", "--p", "1", "--seed", "0"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "2 1" and len(lines) == 2


@pytest.mark.parametrize("p", ["0.001", "2"])
def test_gen_graph_invalid_p(capsys, p):
    assert main(["gen-graph", "--n", "100", "--p", p]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sssp", "--threads", "0"])
    assert exc.value.code == EXIT_USAGE


def test_sssp_rows_and_oracle(tmp_path, capsys):
    g = tmp_path / "g.txt"
    main(["gen-graph", "--n", "300", "--p", "0.1", "--seed", "1", "--out", str(g)])
    out = tmp_path / "r.csv"
    rc = main(["sssp", "--graph", str(g), "--threads", "2", "--k", "8", "--reps", "2", "--out", str(out)])
    assert rc == EXIT_OK
    rows = _rows(out.read_text())
    assert list(rows[0]) == list(SSSP_COLUMNS)
    assert len(rows) == 6
    assert {r["backend"] for r in rows} == {"ws", "central", "hybrid"}
    for r in rows:
        assert int(r["pushes"]) == int(r["relaxations"]) + int(r["dead_tasks"])
        assert int(r["relaxations"]) >= 300


def test_sssp_threads_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("KPRIO_THREADS", "3")
    assert main(["sssp", "--n", "200", "--p", "0.2", "--backend", "hybrid"]) == EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert rows[0]["threads"] == "3"


def test_sssp_k_sweep(capsys):
    assert main(["sssp", "--n", "200", "--p", "0.2", "--backend", "central", "--k-sweep", "--threads", "2"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [int(r["k"]) for r in rows] == [1, 8, 32, 128, 512, 2048]


def test_sssp_oracle_mismatch_is_hard_failure(monkeypatch, capsys):
    import kprio.sssp as sssp

    real = sssp.run_sssp

    def wrong(*args, **kwargs):
        res = real(*args, **kwargs)
        res.distances[-1] += 1.0
        return res

    monkeypatch.setattr(sssp, "run_sssp", wrong)
    assert main(["sssp", "--n", "100", "--p", "0.3", "--backend", "ws"]) == EXIT_FAIL
    assert "oracle" in capsys.readouterr().err


def test_sssp_timeout_exit_code(monkeypatch):
    from kprio import QuiescenceTimeout
    import kprio.sssp as sssp

    def hang(*args, **kwargs):
        raise QuiescenceTimeout("stuck")

    monkeypatch.setattr(sssp, "run_sssp", hang)
    assert main(["sssp", "--n", "100", "--p", "0.3", "--backend", "ws"]) == EXIT_TIMEOUT


def test_simulate_csv(capsys):
    assert main(["simulate", "--n", "200", "--p", "0.2", "--places", "1", "--rho", "0"]) == EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert all(r["settled"] == "1" and r["useless"] == "0" for r in rows)


def test_simulate_bound_column(capsys):
    assert main(["simulate", "--n", "300", "--p", "0.3", "--places", "16", "--rho", "32", "--seed", "3"]) == 0
    rows = _rows(capsys.readouterr().out)
    ok = sum(float(r["bound_useless"]) >= int(r["useless"]) for r in rows)
    assert ok / len(rows) >= 0.9


def test_bound_command(capsys):
    assert main(["bound", "--n", "100", "--p", "0.3", "--d", "0,0,0"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "W_upper=0.0 " in out


def test_audit_pass_and_mutation_fail(capsys):
    assert main(["audit", "--backend", "central", "--ops", "5000", "--threads", "4"]) == EXIT_OK
    assert main(["audit", "--backend", "central", "--ops", "5000", "--threads", "4", "--mutate-window"]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" in out


def test_audit_modes(capsys):
    assert main(["audit", "--backend", "hybrid", "--k-choices", "0,1,4,16", "--ops", "5000", "--threads", "4"]) == 0
    assert main(["audit", "--backend", "ws", "--mode", "stress", "--ops", "5000", "--threads", "4"]) == 0
    assert main(["audit", "--backend", "central", "--mode", "frozen", "--ops", "2000", "--threads", "4"]) == 0


def test_audit_rejects_ws_sequential():
    assert main(["audit", "--backend", "ws", "--ops", "100"]) == EXIT_USAGE


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "kprio.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "gen-graph" in res.stdout
