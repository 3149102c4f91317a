from ._kernel import KIND_HIT, KIND_MISS, NUMBA_ENABLED
from .config import SimConfig
from .simulator import (
    AgentSpec,
    Simulator,
    Trace,
    measure_delta,
    run_scenario,
    sender_agent,
    single_load_latency,
    sweep,
)

__all__ = [
    "AgentSpec",
    "KIND_HIT",
    "KIND_MISS",
    "NUMBA_ENABLED",
    "SimConfig",
    "Simulator",
    "Trace",
    "measure_delta",
    "run_scenario",
    "sender_agent",
    "single_load_latency",
    "sweep",
]
