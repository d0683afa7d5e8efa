"""Algorithm API: what a federated computation implements on each side.

A client algorithm fills ``local_parameters`` and flags which of them need
noise compensation; the framework layer masks flagged parameters and ships
them. A server algorithm consumes unmasked aggregates through an
AggregationContext and decides the next step. Neither side touches masking
or transport directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingGlobal, TypeMismatch, UnknownParameter
from ..protocol import DType, ParameterValue, RESERVED_STEPS


class ClientAlgorithm:
    """Base class for the client side of an algorithm.

    Subclasses implement ``compute_local_parameters(step, global_parameters)``
    and inside it call ``set_parameter`` for each output and
    ``set_compensator_flag`` for the ones that must be masked. The framework
    reads ``local_parameters`` and ``compensator_flags`` afterwards and
    clears both before the next step.
    """

    name = "base"

    def __init__(self, data: np.ndarray, hyperparameters: dict):
        self.data = data
        self.hyperparameters = dict(hyperparameters)
        self.local_parameters: dict = {}
        self.compensator_flags: dict = {}

    def set_parameter(self, name: str, value: ParameterValue) -> None:
        if not isinstance(value, ParameterValue):
            raise TypeMismatch(
                f"parameter {name!r} must be a ParameterValue, got {type(value).__name__}"
            )
        self.local_parameters[name] = value

    def set_compensator_flag(self, flags: dict) -> None:
        """Mark parameters for masking: {name: DType}.

        Every flagged name must already be set and its declared type must
        match the stored value; anything else is a programming error in the
        algorithm and raises immediately.
        """
        for name, dtype in flags.items():
            if name not in self.local_parameters:
                raise UnknownParameter(f"flagged parameter {name!r} was never set")
            dtype = DType(dtype)
            actual = self.local_parameters[name].dtype
            if actual is not dtype:
                raise TypeMismatch(
                    f"parameter {name!r} is {actual.value}, flagged as {dtype.value}"
                )
            self.compensator_flags[name] = dtype

    def begin_step(self) -> None:
        self.local_parameters = {}
        self.compensator_flags = {}

    def compute_local_parameters(self, step: str, global_parameters: dict) -> None:
        raise NotImplementedError


@dataclass
class AggregationContext:
    """Hands a server algorithm the aggregated view of one round.

    ``compute_aggregated_parameter(name, dtype)`` returns the sum of that
    parameter across all clients; for masked parameters the resolver already
    folded in the compensation, so the algorithm never sees masked values.
    """

    step: str
    round: int
    participant_count: int
    resolver: object

    def compute_aggregated_parameter(self, name: str, dtype: DType) -> ParameterValue:
        value = self.resolver(name, DType(dtype))
        if value.dtype is not DType(dtype):
            raise TypeMismatch(
                f"aggregate {name!r} is {value.dtype.value}, requested {DType(dtype).value}"
            )
        return value


@dataclass
class StepOutcome:
    """What the server algorithm wants next: a step name plus its globals."""

    next_step: str
    global_parameters: dict = field(default_factory=dict)


class ServerAlgorithm:
    """Base class for the server side of an algorithm.

    ``first_step()`` names the opening algorithm step with its initial global
    parameters; ``aggregate(ctx)`` consumes one round and returns the next
    StepOutcome, using the reserved Result step name to end the computation;
    ``render_result()`` produces the downloadable artifact.
    """

    name = "base"
    steps: tuple = ()

    def __init__(self, hyperparameters: dict, participant_count: int):
        self.hyperparameters = dict(hyperparameters)
        self.participant_count = participant_count
        for step in self.steps:
            if step in RESERVED_STEPS:
                raise ValueError(f"algorithm step {step!r} shadows a reserved step")

    def first_step(self) -> StepOutcome:
        raise NotImplementedError

    def aggregate(self, ctx: AggregationContext) -> StepOutcome:
        raise NotImplementedError

    def render_result(self) -> bytes:
        raise NotImplementedError


def require_global(global_parameters: dict, name: str) -> ParameterValue:
    if name not in global_parameters:
        raise MissingGlobal(f"global parameter {name!r} not available")
    return global_parameters[name]
