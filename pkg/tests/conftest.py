from __future__ import annotations

import pytest

from kprio import SchedulerConfig, make_backend

BACKEND_NAMES = ("ws", "central", "hybrid")


@pytest.fixture(params=BACKEND_NAMES)
def backend_name(request) -> str:
    return request.param


def build(name: str, P: int = 1, k: int = 1, seed: int = 0, k_max: int = 512):
    return make_backend(name, SchedulerConfig(P=P, k_default=k, k_max=k_max, seed=seed))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
