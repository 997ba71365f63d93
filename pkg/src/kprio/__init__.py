"""Relaxed priority task scheduling: centralized and hybrid k-priority
backends, a work-stealing baseline, and the SSSP, simulation and bound
tooling used to evaluate them."""

from .centralized import CentralizedKPriority
from .core import (
    K_MAX,
    Backend,
    BackendStats,
    ConfigurationError,
    QuiescenceTimeout,
    SchedulerConfig,
    Task,
    Worker,
    run_to_quiescence,
)
from .hybrid import HybridKPriority
from .workstealing import WorkStealing

BACKENDS = {
    "ws": WorkStealing,
    "central": CentralizedKPriority,
    "hybrid": HybridKPriority,
}
_ALIASES = {"central-k": "central", "hybrid-k": "hybrid", "work-stealing": "ws"}


def make_backend(name: str, config: SchedulerConfig) -> Backend:
    """Construct a backend by name (``ws``, ``central`` or ``hybrid``)."""
    try:
        cls = BACKENDS[_ALIASES.get(name, name)]
    except KeyError:
        raise ConfigurationError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return cls(config)


__all__ = [
    "BACKENDS",
    "K_MAX",
    "Backend",
    "BackendStats",
    "CentralizedKPriority",
    "ConfigurationError",
    "HybridKPriority",
    "QuiescenceTimeout",
    "SchedulerConfig",
    "Task",
    "WorkStealing",
    "Worker",
    "make_backend",
    "run_to_quiescence",
]
__version__ = "0.1.0"
