from .harness import (
    FAULT_FORWARD_INDIVIDUAL_NOISE,
    FAULT_NOISE_TO_SERVER,
    SimulationError,
    SimulationReport,
    Witness,
    centralized_variance_oracle,
    run_simulation,
)
from .memnet import LogicalClock, MemTransport, Router, TraceEvent
from .privacy import PrivacyReport, Violation, assert_privacy

__all__ = [
    "FAULT_FORWARD_INDIVIDUAL_NOISE",
    "FAULT_NOISE_TO_SERVER",
    "LogicalClock",
    "MemTransport",
    "PrivacyReport",
    "Router",
    "SimulationError",
    "SimulationReport",
    "TraceEvent",
    "Violation",
    "Witness",
    "assert_privacy",
    "centralized_variance_oracle",
    "run_simulation",
]
