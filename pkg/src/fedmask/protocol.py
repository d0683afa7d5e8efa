"""Shared message/data model and bit-exact wire codec.

Client, compensator, server, and the simulation harness all serialize
parameters through this module, so a value encoded on one side decodes
bit-exactly on any other:

* non-negative integers travel as decimal strings (field elements exceed
  2**53 and would be corrupted by a binary64 JSON number);
* float scalars travel as JSON numbers rendered with shortest-roundtrip
  precision;
* float arrays travel as base64 of their little-endian binary64 bytes in
  row-major order, alongside their shape.

Envelope-level JSON is canonical (sorted keys, no whitespace), so encoding
the same value twice yields identical bytes.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EncodingError, InvalidConfig, ValueOutOfField
from .masking import GaussianSpec, PrimeModulus, validate_modulus

# Reserved step names; algorithm-defined steps may not reuse them.
STEP_INIT = "Init"
STEP_RESULT = "Result"
STEP_FINISHED = "Finished"
RESERVED_STEPS = frozenset({STEP_INIT, STEP_RESULT, STEP_FINISHED})

# Project status values used by the server lifecycle.
STATUS_CREATED = "Created"
STATUS_RUNNING = "Running"
STATUS_AGGREGATING = "Aggregating"
STATUS_DONE = "Done"
STATUS_FAILED = "Failed"
STATUS_ABORTED = "Aborted"
TERMINAL_STATUSES = frozenset({STATUS_DONE, STATUS_FAILED, STATUS_ABORTED})


class DType(str, Enum):
    """Parameter data types; the value doubles as the wire tag."""

    NON_NEGATIVE_INTEGER = "nni"
    FLOAT = "flt"
    FLOAT_ARRAY = "arr"


@dataclass(frozen=True)
class SyncState:
    """Project step plus communication round, shared by every component."""

    step: str
    round: int

    def __post_init__(self):
        if not self.step:
            raise EncodingError("sync step must be a non-empty string")
        if self.round < 0:
            raise EncodingError(f"round must be >= 0, got {self.round}")

    def to_wire(self) -> dict:
        return {"step": self.step, "round": self.round}

    @classmethod
    def from_wire(cls, obj) -> "SyncState":
        try:
            return cls(step=str(obj["step"]), round=int(obj["round"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed sync state: {obj!r}") from exc


class ParameterValue:
    """Tagged union of non-negative-integer scalar, float scalar, float array.

    Equality is bit-exact: float comparisons go through the raw IEEE-754
    bits, so -0.0 != 0.0 here and codec roundtrips can be asserted with ==.
    """

    __slots__ = ("dtype", "value")

    def __init__(self, dtype: DType, value):
        self.dtype = DType(dtype)
        if self.dtype is DType.NON_NEGATIVE_INTEGER:
            value = int(value)
            if value < 0:
                raise ValueOutOfField(f"non-negative integer expected, got {value}")
        elif self.dtype is DType.FLOAT:
            value = float(value)
            if not math.isfinite(value):
                raise EncodingError(f"float parameter must be finite, got {value}")
        else:
            value = np.asarray(value, dtype=np.float64)
            if value.size and not np.all(np.isfinite(value)):
                raise EncodingError("float array parameter must be finite")
            value.setflags(write=False)
        self.value = value

    @classmethod
    def non_negative_integer(cls, v) -> "ParameterValue":
        return cls(DType.NON_NEGATIVE_INTEGER, v)

    @classmethod
    def float_scalar(cls, v) -> "ParameterValue":
        return cls(DType.FLOAT, v)

    @classmethod
    def float_array(cls, v) -> "ParameterValue":
        return cls(DType.FLOAT_ARRAY, v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterValue):
            return NotImplemented
        if self.dtype is not other.dtype:
            return False
        if self.dtype is DType.NON_NEGATIVE_INTEGER:
            return self.value == other.value
        if self.dtype is DType.FLOAT:
            return _float_bits(self.value) == _float_bits(other.value)
        return self.value.shape == other.value.shape and (
            self.value.tobytes() == other.value.tobytes()
        )

    def __hash__(self):
        raise TypeError("ParameterValue is not hashable")

    def __repr__(self) -> str:
        return f"ParameterValue({self.dtype.value}, {self.value!r})"


def _float_bits(x: float) -> bytes:
    return np.float64(x).tobytes()


def encode_parameter(value: ParameterValue) -> dict:
    """Encode one parameter into its JSON wire object."""
    if value.dtype is DType.NON_NEGATIVE_INTEGER:
        return {"t": "nni", "v": str(value.value)}
    if value.dtype is DType.FLOAT:
        if not math.isfinite(value.value):
            raise EncodingError(f"cannot encode non-finite float {value.value}")
        return {"t": "flt", "v": value.value}
    arr = value.value
    if arr.size and not np.all(np.isfinite(arr)):
        raise EncodingError("cannot encode non-finite float array")
    data = base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")
    return {"t": "arr", "shape": list(arr.shape), "data": data}


def decode_parameter(obj) -> ParameterValue:
    """Decode a wire object back into a ParameterValue (bit-exact inverse)."""
    try:
        tag = obj["t"]
    except (TypeError, KeyError) as exc:
        raise EncodingError(f"malformed parameter object: {obj!r}") from exc
    if tag == "nni":
        raw = obj.get("v")
        if not isinstance(raw, str):
            raise EncodingError("non-negative integer must be encoded as a decimal string")
        try:
            v = int(raw, 10)
        except ValueError as exc:
            raise EncodingError(f"bad integer literal {raw!r}") from exc
        return ParameterValue.non_negative_integer(v)
    if tag == "flt":
        raw = obj.get("v")
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise EncodingError(f"bad float value {raw!r}")
        return ParameterValue.float_scalar(float(raw))
    if tag == "arr":
        try:
            shape = tuple(int(d) for d in obj["shape"])
            data = base64.b64decode(obj["data"], validate=True)
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed array object: {obj!r}") from exc
        count = 1
        for d in shape:
            if d < 0:
                raise EncodingError(f"negative dimension in shape {shape}")
            count *= d
        if len(data) != 8 * count:
            raise EncodingError(
                f"array payload holds {len(data)} bytes, shape {shape} needs {8 * count}"
            )
        arr = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
        return ParameterValue.float_array(arr)
    raise EncodingError(f"unknown parameter tag {tag!r}")


def encode_parameter_map(params: dict) -> dict:
    """Encode a name -> ParameterValue map, keys in lexicographic order."""
    return {name: encode_parameter(params[name]) for name in sorted(params)}


def decode_parameter_map(obj) -> dict:
    if not isinstance(obj, dict):
        raise EncodingError(f"parameter map must be an object, got {type(obj).__name__}")
    return {str(name): decode_parameter(obj[name]) for name in sorted(obj)}


def encode_flags(flags: dict) -> dict:
    return {name: DType(flags[name]).value for name in sorted(flags)}


def decode_flags(obj) -> dict:
    if not isinstance(obj, dict):
        raise EncodingError(f"flag map must be an object, got {type(obj).__name__}")
    try:
        return {str(name): DType(obj[name]) for name in sorted(obj)}
    except ValueError as exc:
        raise EncodingError(f"unknown flag tag in {obj!r}") from exc


def canonical_json_bytes(obj) -> bytes:
    """Canonical envelope encoding: sorted keys, no whitespace, UTF-8."""
    try:
        return json.dumps(
            obj, sort_keys=True, separators=(",", ":"), allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise EncodingError(f"object not canonically encodable: {exc}") from exc


def parse_json_bytes(data: bytes):
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EncodingError(f"bad JSON payload: {exc}") from exc


@dataclass(frozen=True)
class ProjectConfig:
    """Everything a project needs agreed up front by all parties."""

    id: str
    name: str
    description: str
    tool: str
    algorithm: str
    hyperparameters: dict
    participant_count: int
    modulus: PrimeModulus
    noise_variance: GaussianSpec = field(default_factory=GaussianSpec)

    def __post_init__(self):
        if self.participant_count < 3:
            raise InvalidConfig(
                f"at least three participants required, got {self.participant_count}"
            )
        try:
            validate_modulus(self.modulus, self.participant_count)
        except Exception as exc:
            raise InvalidConfig(f"modulus unsuitable: {exc}") from exc

    def to_wire(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "tool": self.tool,
            "algorithm": self.algorithm,
            "hyperparameters": encode_parameter_map(self.hyperparameters),
            "participant_count": self.participant_count,
            "modulus": str(self.modulus.p),
            "noise_variance": self.noise_variance.variance,
        }

    @classmethod
    def from_wire(cls, obj) -> "ProjectConfig":
        try:
            return cls(
                id=str(obj["id"]),
                name=str(obj["name"]),
                description=str(obj["description"]),
                tool=str(obj["tool"]),
                algorithm=str(obj["algorithm"]),
                hyperparameters=decode_parameter_map(obj.get("hyperparameters", {})),
                participant_count=int(obj["participant_count"]),
                modulus=PrimeModulus(int(str(obj["modulus"]), 10)),
                noise_variance=GaussianSpec(float(obj["noise_variance"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed project config: {exc}") from exc


@dataclass(frozen=True)
class SyncCheck:
    ok: bool
    mismatched: tuple = ()


def check_sync(reports, expected: SyncState) -> SyncCheck:
    """Compare (source, SyncState) reports against the expected state.

    Returns ok only if every report matches both step and round; otherwise
    lists the offending sources, sorted, so the result is independent of
    report order. A mismatch is a return value, not an exception.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("check_sync requires at least one report")
    bad = sorted(str(source) for source, state in reports if state != expected)
    return SyncCheck(ok=not bad, mismatched=tuple(bad))
