"""Noise-aggregation service.

Collects one noise envelope per client per round, keyed by the hashed
project id (the raw id, usernames, and tokens never reach this process).
When the Kth envelope of a round arrives the per-parameter noise aggregates
are computed, the aggregate identity is derived from the member hashes, one
compensation message is sent to the server, and every stored noise value is
deleted, whether or not the server accepted.

The code is algorithm-agnostic: parameter names are opaque strings and the
only type information used is the dtype tag carried in the envelope.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import (
    DuplicateNoise,
    EncodingError,
    FedMaskError,
    InconsistentRound,
    MalformedEnvelope,
    MalformedHash,
    ServerUnreachable,
)
from ..identity import combine_member_hashes
from ..masking import PrimeModulus, field_aggregate, real_aggregate
from ..protocol import (
    DType,
    ParameterValue,
    SyncState,
    decode_flags,
    decode_parameter_map,
    encode_parameter_map,
)

log = logging.getLogger(__name__)

DEFAULT_ROUND_TIMEOUT = 300.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 1.0


@dataclass(frozen=True)
class NoiseEnvelope:
    project_hash: str
    username_hash: str
    token_hash: str
    participant_count: int
    server_url: str
    modulus: PrimeModulus
    sync: SyncState
    noise: dict
    dtypes: dict

    @classmethod
    def from_wire(cls, obj) -> "NoiseEnvelope":
        if not isinstance(obj, dict):
            raise MalformedEnvelope("noise envelope must be a JSON object")
        try:
            envelope = cls(
                project_hash=str(obj["project_hash"]),
                username_hash=str(obj["username_hash"]),
                token_hash=str(obj["token_hash"]),
                participant_count=int(obj["participant_count"]),
                server_url=str(obj["server_url"]),
                modulus=PrimeModulus(int(str(obj["modulus"]), 10)),
                sync=SyncState.from_wire(obj.get("sync", {})),
                noise=decode_parameter_map(obj.get("noise", {})),
                dtypes=decode_flags(obj.get("dtypes", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEnvelope(f"bad noise envelope: {exc}") from exc
        except (MalformedHash, EncodingError) as exc:
            raise MalformedEnvelope(f"bad noise envelope: {exc}") from exc
        except FedMaskError as exc:
            raise MalformedEnvelope(f"bad noise envelope: {exc}") from exc
        envelope._validate()
        return envelope

    def _validate(self) -> None:
        for what, value in (
            ("project_hash", self.project_hash),
            ("username_hash", self.username_hash),
            ("token_hash", self.token_hash),
        ):
            if len(value) != 64 or not set(value) <= set("0123456789abcdef"):
                raise MalformedEnvelope(f"{what} must be 64 lowercase hex chars")
        if self.participant_count < 3:
            raise MalformedEnvelope(
                f"participant count must be >= 3, got {self.participant_count}"
            )
        if not self.server_url:
            raise MalformedEnvelope("server_url must be non-empty")
        if set(self.noise) != set(self.dtypes):
            raise MalformedEnvelope("noise parameter names and dtype tags disagree")
        for name, value in self.noise.items():
            if value.dtype is not self.dtypes[name]:
                raise MalformedEnvelope(
                    f"noise value {name!r} is {value.dtype.value}, tagged as "
                    f"{self.dtypes[name].value}"
                )
            if value.dtype is DType.NON_NEGATIVE_INTEGER and value.value >= self.modulus.p:
                raise MalformedEnvelope(
                    f"noise value {name!r} is not below the modulus"
                )

    def round_signature(self) -> tuple:
        """Everything that must agree across the envelopes of one round."""
        return (
            self.participant_count,
            self.server_url,
            self.modulus.p,
            self.sync,
            tuple(sorted((n, d.value) for n, d in self.dtypes.items())),
        )


@dataclass
class PendingRound:
    project_hash: str
    signature: tuple
    sync: SyncState
    server_url: str
    modulus: PrimeModulus
    expected_count: int
    dtypes: dict
    started_at: float
    members: dict = dc_field(default_factory=dict)  # username_hash -> (token_hash, noise)


@dataclass
class FlushReport:
    flushed: bool
    error: str | None = None


class CompensatorCore:
    """State machine of the noise-aggregation service.

    ``connect`` maps a server URL to a Transport; injecting it is what lets
    the simulation net route the outbound compensation message in memory.
    """

    def __init__(
        self,
        connect,
        clock=time.time,
        sleep=time.sleep,
        round_timeout: float = DEFAULT_ROUND_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
    ):
        self.connect = connect
        self.clock = clock
        self.sleep = sleep
        self.round_timeout = round_timeout
        self.retries = retries
        self.backoff = backoff
        self._pending: dict = {}
        self._locks: dict = {}
        self._registry_lock = threading.Lock()

    def pending_counts(self) -> dict:
        """project_hash -> stored envelope count (test/introspection hook)."""
        with self._registry_lock:
            return {h: len(p.members) for h, p in self._pending.items()}

    def _lock_for(self, project_hash: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._locks.get(project_hash)
            if lock is None:
                lock = self._locks[project_hash] = threading.Lock()
            return lock

    def accept_noise(self, payload: dict) -> dict:
        envelope = NoiseEnvelope.from_wire(payload)
        with self._lock_for(envelope.project_hash):
            pending = self._pending.get(envelope.project_hash)
            if pending is not None and (
                self.clock() - pending.started_at > self.round_timeout
            ):
                log.warning(
                    "discarding stale pending round %d for %s",
                    pending.sync.round, envelope.project_hash[:12],
                )
                del self._pending[envelope.project_hash]
                pending = None
            if pending is None:
                pending = PendingRound(
                    project_hash=envelope.project_hash,
                    signature=envelope.round_signature(),
                    sync=envelope.sync,
                    server_url=envelope.server_url,
                    modulus=envelope.modulus,
                    expected_count=envelope.participant_count,
                    dtypes=dict(envelope.dtypes),
                    started_at=self.clock(),
                )
                self._pending[envelope.project_hash] = pending
            elif envelope.round_signature() != pending.signature:
                raise InconsistentRound(
                    "envelope disagrees with earlier envelopes of this round "
                    f"(round {pending.sync.round}, K={pending.expected_count})"
                )
            if envelope.username_hash in pending.members:
                raise DuplicateNoise(
                    f"round {pending.sync.round} already holds noise for this member"
                )
            pending.members[envelope.username_hash] = (
                envelope.token_hash, envelope.noise,
            )
            stored = len(pending.members)
            report = FlushReport(flushed=False)
            if stored == pending.expected_count:
                report = self._flush(pending)
        out = {"accepted": True, "stored": stored, "flushed": report.flushed}
        if report.error:
            out["error"] = report.error
        return out

    def _flush(self, pending: PendingRound) -> FlushReport:
        """Aggregate, forward, and forget one complete round."""
        try:
            body = self._compensation_body(pending)
            error = self._send(pending.server_url, pending.project_hash, body)
            return FlushReport(flushed=error is None, error=error)
        finally:
            # The stored noise is deleted no matter what happened; nothing
            # about a round survives its flush.
            self._pending.pop(pending.project_hash, None)

    def _compensation_body(self, pending: PendingRound) -> dict:
        member_hashes = sorted(pending.members)
        aggregates = {}
        for name in sorted(pending.dtypes):
            dtype = pending.dtypes[name]
            values = [pending.members[h][1][name] for h in member_hashes]
            if dtype is DType.NON_NEGATIVE_INTEGER:
                total = field_aggregate(
                    [np.array([v.value]) for v in values], pending.modulus
                )
                aggregates[name] = ParameterValue.non_negative_integer(int(total[0]))
            elif dtype is DType.FLOAT:
                total = real_aggregate([np.array([v.value]) for v in values])
                aggregates[name] = ParameterValue.float_scalar(float(total[0]))
            else:
                total = real_aggregate([v.value for v in values])
                aggregates[name] = ParameterValue.float_array(total)
        identity = combine_member_hashes(
            pending.project_hash,
            [(h, pending.members[h][0]) for h in member_hashes],
        )
        return {
            "identity": identity.to_wire(),
            "sync": pending.sync.to_wire(),
            "noise": encode_parameter_map(aggregates),
        }

    def _send(self, server_url: str, project_hash: str, body: dict) -> str | None:
        """POST the compensation message; returns an error string or None."""
        path = f"/projects/{project_hash}/compensation"
        transport = self.connect(server_url)
        delay = self.backoff
        last_error = "unknown"
        for attempt in range(self.retries):
            try:
                response = transport.post_json(path, body)
            except ServerUnreachable as exc:
                last_error = f"ServerUnreachable: {exc}"
            else:
                if response.ok:
                    return None
                if 400 <= response.status < 500:
                    # The server rejected the message; retrying the identical
                    # payload cannot succeed.
                    try:
                        response.unwrap()
                    except FedMaskError as exc:
                        log.warning("compensation rejected: %s", exc)
                        return f"{exc.code}: {exc}"
                last_error = f"server returned status {response.status}"
            if attempt + 1 < self.retries:
                self.sleep(delay)
                delay *= 2
        log.warning("compensation for %s dropped: %s", project_hash[:12], last_error)
        return last_error
