from .api import ServerApi
from .core import (
    CompensationRecord,
    ProjectState,
    RoundBuffer,
    ServerCore,
    Submission,
    compute_aggregated_parameter,
)

__all__ = [
    "CompensationRecord",
    "ProjectState",
    "RoundBuffer",
    "ServerApi",
    "ServerCore",
    "Submission",
    "compute_aggregated_parameter",
]
