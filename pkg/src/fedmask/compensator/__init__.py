from .api import CompensatorApi
from .core import CompensatorCore, FlushReport, NoiseEnvelope, PendingRound

__all__ = [
    "CompensatorApi",
    "CompensatorCore",
    "FlushReport",
    "NoiseEnvelope",
    "PendingRound",
]
