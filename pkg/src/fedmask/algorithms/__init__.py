"""Algorithm registry: names map to (client class, server class) pairs."""

from __future__ import annotations

from ..errors import InvalidConfig
from .base import AggregationContext, ClientAlgorithm, ServerAlgorithm, StepOutcome
from .variance import VarianceClient, VarianceServer

REGISTRY = {
    "variance": (VarianceClient, VarianceServer),
}


def client_algorithm(name: str):
    try:
        return REGISTRY[name][0]
    except KeyError:
        raise InvalidConfig(f"unknown algorithm {name!r}") from None


def server_algorithm(name: str):
    try:
        return REGISTRY[name][1]
    except KeyError:
        raise InvalidConfig(f"unknown algorithm {name!r}") from None


__all__ = [
    "AggregationContext",
    "ClientAlgorithm",
    "REGISTRY",
    "ServerAlgorithm",
    "StepOutcome",
    "client_algorithm",
    "server_algorithm",
]
