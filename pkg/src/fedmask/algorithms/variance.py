"""Federated column-wise variance over horizontally partitioned data.

Two algorithm steps. In Sum each client sends its row count and per-column
sums; the server turns the aggregates into global means. In Sum-square-error
each client sends per-column squared deviations from those means; the server
divides by the global count for the population variance. Counts are masked
in the integer field, both float vectors with real-valued noise.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from ..errors import DivisionByZero
from ..protocol import DType, ParameterValue, STEP_RESULT
from .base import (
    AggregationContext,
    ClientAlgorithm,
    ServerAlgorithm,
    StepOutcome,
    require_global,
)

STEP_SUM = "Sum"
STEP_SSE = "Sum-square-error"


class VarianceClient(ClientAlgorithm):
    name = "variance"

    def compute_local_parameters(self, step: str, global_parameters: dict) -> None:
        if step == STEP_SUM:
            self._sum_step()
        elif step == STEP_SSE:
            self._sse_step(global_parameters)
        else:
            raise ValueError(f"variance client cannot handle step {step!r}")

    def _sum_step(self) -> None:
        local_count = int(self.data.shape[0])
        local_sum = np.sum(self.data, axis=0, dtype=np.float64)
        self.set_parameter("local-count", ParameterValue.non_negative_integer(local_count))
        self.set_parameter("local-sum", ParameterValue.float_array(local_sum))
        self.set_compensator_flag(
            {
                "local-count": DType.NON_NEGATIVE_INTEGER,
                "local-sum": DType.FLOAT_ARRAY,
            }
        )

    def _sse_step(self, global_parameters: dict) -> None:
        mean = require_global(global_parameters, "global-mean").value
        deviation = self.data - mean
        local_sse = np.sum(deviation * deviation, axis=0, dtype=np.float64)
        self.set_parameter("local-sse", ParameterValue.float_array(local_sse))
        self.set_compensator_flag({"local-sse": DType.FLOAT_ARRAY})


class VarianceServer(ServerAlgorithm):
    name = "variance"
    steps = (STEP_SUM, STEP_SSE)

    def __init__(self, hyperparameters: dict, participant_count: int):
        super().__init__(hyperparameters, participant_count)
        self.global_count: int | None = None
        self.global_mean: np.ndarray | None = None
        self.global_variance: np.ndarray | None = None

    def first_step(self) -> StepOutcome:
        return StepOutcome(next_step=STEP_SUM)

    def aggregate(self, ctx: AggregationContext) -> StepOutcome:
        if ctx.step == STEP_SUM:
            return self._aggregate_sum(ctx)
        if ctx.step == STEP_SSE:
            return self._aggregate_sse(ctx)
        raise ValueError(f"variance server cannot handle step {ctx.step!r}")

    def _aggregate_sum(self, ctx: AggregationContext) -> StepOutcome:
        global_count = ctx.compute_aggregated_parameter(
            "local-count", DType.NON_NEGATIVE_INTEGER
        )
        global_sum = ctx.compute_aggregated_parameter("local-sum", DType.FLOAT_ARRAY)
        self.global_count = global_count.value
        if self.global_count == 0:
            raise DivisionByZero("zero rows across all participants")
        self.global_mean = global_sum.value / self.global_count
        return StepOutcome(
            next_step=STEP_SSE,
            global_parameters={
                "global-mean": ParameterValue.float_array(self.global_mean)
            },
        )

    def _aggregate_sse(self, ctx: AggregationContext) -> StepOutcome:
        global_sse = ctx.compute_aggregated_parameter("local-sse", DType.FLOAT_ARRAY)
        self.global_variance = global_sse.value / self.global_count
        return StepOutcome(
            next_step=STEP_RESULT,
            global_parameters={
                "global-mean": ParameterValue.float_array(self.global_mean),
                "global-variance": ParameterValue.float_array(self.global_variance),
            },
        )

    def render_result(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["column", "mean", "variance"])
        mean = np.atleast_1d(self.global_mean)
        variance = np.atleast_1d(self.global_variance)
        for index, (m, v) in enumerate(zip(mean, variance)):
            writer.writerow([index, repr(float(m)), repr(float(v))])
        return buf.getvalue().encode("utf-8")
