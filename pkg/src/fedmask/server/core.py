"""Coordination service: accounts, project lifecycle, and aggregation.

The server owns the step/round state machine. Each project moves along
Created -> Running -> (Aggregating <-> Running) -> Done, or to Failed or
Aborted from any non-terminal state. The round counter increments exactly
once per completed aggregation; collecting the result acknowledgements
flips the step to Finished without another increment.

Masked submissions and the compensation message for a round are collected
in a RoundBuffer; aggregation fires only when all K submissions are present
and, if any parameter was flagged, the matching compensation arrived and
its identity equals the one derived from the server's own roster.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..algorithms import server_algorithm
from ..algorithms.base import AggregationContext
from ..errors import (
    BadCredentials,
    DuplicateCompensation,
    DuplicateSubmission,
    FedMaskError,
    FlagDisagreement,
    IdentityMismatch,
    InvalidConfig,
    MissingCompensation,
    MissingParameter,
    NotParticipant,
    ProjectNotRunning,
    ResultNotReady,
    SyncMismatch,
    TypeMismatch,
    UnknownProject,
    UsernameTaken,
    ValueOutOfField,
)
from ..identity import (
    CompensatorIdentity,
    Roster,
    hash_password,
    new_id,
    sha256_hex,
    verify_password,
)
from ..masking import (
    GaussianSpec,
    PrimeModulus,
    default_modulus,
    field_aggregate,
    field_unmask,
    real_aggregate,
    real_unmask,
)
from ..protocol import (
    DType,
    ParameterValue,
    ProjectConfig,
    STATUS_ABORTED,
    STATUS_AGGREGATING,
    STATUS_CREATED,
    STATUS_DONE,
    STATUS_FAILED,
    STATUS_RUNNING,
    STEP_FINISHED,
    STEP_INIT,
    STEP_RESULT,
    SyncState,
    TERMINAL_STATUSES,
    decode_parameter_map,
    encode_parameter_map,
)
from ..storage import SqliteStorage, Storage

log = logging.getLogger(__name__)

DEFAULT_ROUND_TIMEOUT = 300.0


@dataclass
class Submission:
    username: str
    sync: SyncState
    parameters: dict
    flags: dict


@dataclass
class CompensationRecord:
    identity: CompensatorIdentity
    sync: SyncState
    noise: dict


@dataclass
class RoundBuffer:
    round: int
    step: str
    submissions: dict = dc_field(default_factory=dict)
    compensation: CompensationRecord | None = None

    def agreed_flags(self) -> dict:
        """The flag map all submissions agree on; raises FlagDisagreement."""
        flag_maps = [sub.flags for sub in self.submissions.values()]
        if not flag_maps:
            return {}
        first = flag_maps[0]
        for other in flag_maps[1:]:
            if other != first:
                raise FlagDisagreement(
                    f"clients flagged different parameter sets in round {self.round}"
                )
        return dict(first)


def compute_aggregated_parameter(
    name: str, dtype: DType, buffer: RoundBuffer, modulus: PrimeModulus
) -> ParameterValue:
    """Aggregate one named parameter across a complete round buffer.

    Flagged integer parameters: modular sum of the masked values minus the
    compensator's noise aggregate, reduced into [0, p). Flagged float
    parameters: float sum minus the noise aggregate. Unflagged parameters:
    plain sum (modular for integers). Submissions are folded in username
    order so float results are reproducible.
    """
    dtype = DType(dtype)
    flags = buffer.agreed_flags()
    values = []
    for username in sorted(buffer.submissions):
        sub = buffer.submissions[username]
        if name not in sub.parameters:
            raise MissingParameter(f"client {username!r} sent no parameter {name!r}")
        value = sub.parameters[name]
        if value.dtype is not dtype:
            raise TypeMismatch(
                f"client {username!r} sent {name!r} as {value.dtype.value}, "
                f"expected {dtype.value}"
            )
        values.append(value)

    noise = None
    if name in flags:
        if buffer.compensation is None:
            raise MissingCompensation(
                f"parameter {name!r} is flagged but round {buffer.round} has "
                "no compensation"
            )
        if name not in buffer.compensation.noise:
            raise MissingCompensation(
                f"compensation for round {buffer.round} lacks parameter {name!r}"
            )
        noise = buffer.compensation.noise[name]
        if noise.dtype is not dtype:
            raise TypeMismatch(
                f"noise aggregate for {name!r} is {noise.dtype.value}, "
                f"expected {dtype.value}"
            )

    if dtype is DType.NON_NEGATIVE_INTEGER:
        total = field_aggregate([np.array([v.value]) for v in values], modulus)
        if noise is not None:
            total = field_unmask(total, np.array([noise.value]), modulus)
        return ParameterValue.non_negative_integer(int(total[0]))

    if dtype is DType.FLOAT:
        total = real_aggregate([np.array([v.value]) for v in values])
        if noise is not None:
            total = real_unmask(total, np.array([noise.value]))
        return ParameterValue.float_scalar(float(total[0]))

    total = real_aggregate([v.value for v in values])
    if noise is not None:
        total = real_unmask(total, noise.value)
    return ParameterValue.float_array(total)


@dataclass
class ProjectState:
    config: ProjectConfig
    creator: str
    created_at: float
    status: str = STATUS_CREATED
    failure: str | None = None
    sync: SyncState = dc_field(default_factory=lambda: SyncState(STEP_INIT, 0))
    roster: Roster = None
    global_parameters: dict = dc_field(default_factory=dict)
    result_payload: bytes | None = None
    round_started_at: float = 0.0
    buffer: RoundBuffer | None = None
    algorithm: object = None
    # Every sync value the project has announced, in order (not persisted).
    sync_history: list = dc_field(default_factory=list)

    def __post_init__(self):
        if not self.sync_history:
            self.sync_history.append(self.sync)

    def to_record(self) -> dict:
        return {
            "config": self.config.to_wire(),
            "creator": self.creator,
            "created_at": self.created_at,
            "status": self.status,
            "failure": self.failure,
            "sync": self.sync.to_wire(),
            "roster": self.roster.to_wire(),
            "global_parameters": encode_parameter_map(self.global_parameters),
            "result_payload": (
                base64.b64encode(self.result_payload).decode("ascii")
                if self.result_payload is not None
                else None
            ),
            "round_started_at": self.round_started_at,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ProjectState":
        config = ProjectConfig.from_wire(record["config"])
        state = cls(
            config=config,
            creator=record["creator"],
            created_at=record["created_at"],
            status=record["status"],
            failure=record.get("failure"),
            sync=SyncState.from_wire(record["sync"]),
            roster=Roster.from_wire(
                config.id, config.participant_count, record.get("roster", [])
            ),
            global_parameters=decode_parameter_map(record.get("global_parameters", {})),
            result_payload=(
                base64.b64decode(record["result_payload"])
                if record.get("result_payload") is not None
                else None
            ),
            round_started_at=record.get("round_started_at", 0.0),
        )
        # In-flight round state (buffer, algorithm instance) is not persisted,
        # so a project that was mid-run when the process died cannot resume.
        if state.status in (STATUS_RUNNING, STATUS_AGGREGATING):
            state.status = STATUS_FAILED
            state.failure = "ServerRestart: in-flight round state was lost"
        return state


class ServerCore:
    """All server operations, transport-agnostic.

    Every method taking a project id enforces authentication, the status
    gate, and the per-round timeout, then mutates state under the project
    lock. The HTTP layer and the in-memory simulation transport both call
    straight into this class.
    """

    def __init__(
        self,
        storage: Storage | None = None,
        clock=time.time,
        rng=None,
        round_timeout: float = DEFAULT_ROUND_TIMEOUT,
    ):
        self.storage = storage if storage is not None else SqliteStorage(":memory:")
        self.clock = clock
        self.rng = rng  # random.Random for reproducible ids/tokens, or None
        self.round_timeout = round_timeout
        self._projects: dict = {}
        self._hash_index: dict = {}
        self._sessions: dict = {}
        self._locks: dict = {}
        self._registry_lock = threading.Lock()
        for project_id, record in self.storage.list_projects():
            state = ProjectState.from_record(record)
            self._projects[project_id] = state
            self._hash_index[sha256_hex(project_id)] = project_id
            if state.status == STATUS_FAILED and record["status"] != STATUS_FAILED:
                self.storage.put_project(project_id, state.to_record())

    # -- accounts and sessions ------------------------------------------------

    def signup(self, username: str, password: str) -> dict:
        if not username or not isinstance(username, str):
            raise BadCredentials("username must be a non-empty string")
        if not password or not isinstance(password, str):
            raise BadCredentials("password must be a non-empty string")
        if not self.storage.put_user(username, hash_password(password)):
            raise UsernameTaken(f"username {username!r} is already registered")
        return {"username": username}

    def login(self, username: str, password: str) -> dict:
        digest = self.storage.get_user(username)
        if digest is None or not verify_password(password, digest):
            raise BadCredentials("unknown username or wrong password")
        with self._registry_lock:
            while True:
                session = new_id(self.rng)
                if session not in self._sessions:
                    break
            self._sessions[session] = username
        return {"session": session, "username": username}

    def session_user(self, session: str | None) -> str:
        username = self._sessions.get(session or "")
        if username is None:
            raise BadCredentials("missing or expired session")
        return username

    # -- project plumbing -------------------------------------------------------

    def _lock_for(self, project_id: str) -> threading.RLock:
        with self._registry_lock:
            lock = self._locks.get(project_id)
            if lock is None:
                lock = self._locks[project_id] = threading.RLock()
            return lock

    def _state(self, project_id: str) -> ProjectState:
        state = self._projects.get(project_id)
        if state is None:
            raise UnknownProject(f"no project with id {project_id!r}")
        return state

    def _persist(self, state: ProjectState) -> None:
        self.storage.put_project(state.config.id, state.to_record())

    def _fail(self, state: ProjectState, code: str, message: str) -> None:
        if state.status in TERMINAL_STATUSES:
            return
        state.status = STATUS_FAILED
        state.failure = f"{code}: {message}"
        state.buffer = None
        self._persist(state)
        log.warning("project %s failed: %s", state.config.id, state.failure)

    def _check_timeout(self, state: ProjectState) -> None:
        if state.status not in (STATUS_RUNNING, STATUS_AGGREGATING):
            return
        if self.clock() - state.round_started_at > self.round_timeout:
            self._fail(
                state,
                "Timeout",
                f"round {state.sync.round} exceeded {self.round_timeout:g}s",
            )

    def _require_active(self, state: ProjectState) -> None:
        self._check_timeout(state)
        if state.status not in (STATUS_RUNNING, STATUS_AGGREGATING):
            raise ProjectNotRunning(
                f"project is {state.status}",
                status=state.status,
                failure=state.failure,
            )

    def _require_participant(self, state: ProjectState, username, token) -> None:
        if not username or not token or not state.roster.holds(username, token):
            raise NotParticipant("credentials do not match any bound participant")

    # -- coordinator operations -------------------------------------------------

    def create_project(self, session: str | None, draft: dict) -> dict:
        creator = self.session_user(session)
        if not isinstance(draft, dict):
            raise InvalidConfig("project draft must be an object")
        algorithm = str(draft.get("algorithm", ""))
        server_algorithm(algorithm)  # raises InvalidConfig for unknown names
        with self._registry_lock:
            while True:
                project_id = new_id(self.rng)
                if project_id not in self._projects:
                    break
            try:
                raw_modulus = draft.get("modulus")
                modulus = (
                    PrimeModulus(int(str(raw_modulus)))
                    if raw_modulus is not None
                    else default_modulus()
                )
                raw_variance = draft.get("noise_variance")
                noise_variance = (
                    GaussianSpec(float(raw_variance))
                    if raw_variance is not None
                    else GaussianSpec()
                )
                config = ProjectConfig(
                    id=project_id,
                    name=str(draft.get("name", "")),
                    description=str(draft.get("description", "")),
                    tool=str(draft.get("tool", "")),
                    algorithm=algorithm,
                    hyperparameters=decode_parameter_map(
                        draft.get("hyperparameters", {})
                    ),
                    participant_count=int(draft.get("participant_count", 0)),
                    modulus=modulus,
                    noise_variance=noise_variance,
                )
            except InvalidConfig:
                raise
            except FedMaskError as exc:
                raise InvalidConfig(f"bad project draft: {exc}") from exc
            except (TypeError, ValueError) as exc:
                raise InvalidConfig(f"bad project draft: {exc}") from exc
            state = ProjectState(
                config=config,
                creator=creator,
                created_at=self.clock(),
                roster=Roster(project_id, config.participant_count),
            )
            self._projects[project_id] = state
            self._hash_index[sha256_hex(project_id)] = project_id
        self._persist(state)
        log.info("project %s created by %s (%s, K=%d)",
                 project_id, creator, config.algorithm, config.participant_count)
        return self._project_summary(state)

    def _project_summary(self, state: ProjectState) -> dict:
        return {
            "project": state.config.to_wire(),
            "creator": state.creator,
            "created_at": state.created_at,
            "status": state.status,
            "failure": state.failure,
            "joined": state.roster.joined,
            "tokens_issued": state.roster.issued,
            "sync": state.sync.to_wire(),
        }

    def issue_tokens(self, session: str | None, project_id: str, count: int | None) -> dict:
        username = self.session_user(session)
        with self._lock_for(project_id):
            state = self._state(project_id)
            if username != state.creator:
                raise BadCredentials("only the project creator can issue tokens")
            remaining = state.config.participant_count - state.roster.issued
            n = remaining if count is None else int(count)
            if n < 1:
                raise InvalidConfig(f"token count must be >= 1, got {n}")
            tokens = [state.roster.issue(self.rng).token for _ in range(n)]
            self._persist(state)
        return {"tokens": tokens}

    def list_projects(self, session: str | None) -> dict:
        username = self.session_user(session)
        rows = []
        for state in self._projects.values():
            if state.creator != username:
                continue
            self._check_timeout(state)
            rows.append(
                {
                    "id": state.config.id,
                    "name": state.config.name,
                    "algorithm": state.config.algorithm,
                    "participant_count": state.config.participant_count,
                    "joined": state.roster.joined,
                    "status": state.status,
                    "created_at": state.created_at,
                }
            )
        return {"projects": rows}

    def abort(self, session: str | None, project_id: str) -> dict:
        username = self.session_user(session)
        with self._lock_for(project_id):
            state = self._state(project_id)
            if username != state.creator:
                raise BadCredentials("only the project creator can abort")
            if state.status in TERMINAL_STATUSES:
                raise ProjectNotRunning(
                    f"project is already {state.status}",
                    status=state.status,
                    failure=state.failure,
                )
            state.status = STATUS_ABORTED
            state.buffer = None
            self._persist(state)
        return {"status": STATUS_ABORTED}

    # -- participant operations ---------------------------------------------------

    def fetch_info(self, project_id: str) -> dict:
        state = self._state(project_id)
        self._check_timeout(state)
        return self._project_summary(state)

    def join(self, project_id: str, username: str, password: str, token: str) -> dict:
        digest = self.storage.get_user(username or "")
        if digest is None or not verify_password(password or "", digest):
            raise BadCredentials("unknown username or wrong password")
        with self._lock_for(project_id):
            state = self._state(project_id)
            if state.status != STATUS_CREATED:
                raise ProjectNotRunning(
                    f"project is {state.status} and no longer accepts joins",
                    status=state.status,
                    failure=state.failure,
                )
            was_member = state.roster.holds(username, token)
            state.roster.bind(token, username)
            if state.roster.full and not was_member:
                self._start(state)
            self._persist(state)
            log.info("project %s: %s joined (%d/%d)",
                     project_id, username, state.roster.joined,
                     state.config.participant_count)
            return self._project_summary(state)

    def _start(self, state: ProjectState) -> None:
        """Roster complete: run the opening aggregation and enter round 1."""
        state.algorithm = server_algorithm(state.config.algorithm)(
            state.config.hyperparameters, state.config.participant_count
        )
        outcome = state.algorithm.first_step()
        state.global_parameters = dict(outcome.global_parameters)
        state.status = STATUS_RUNNING
        state.sync = SyncState(outcome.next_step, state.sync.round + 1)
        state.sync_history.append(state.sync)
        state.buffer = RoundBuffer(round=state.sync.round, step=state.sync.step)
        state.round_started_at = self.clock()

    def fetch_global(self, project_id: str, username, token) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_participant(state, username, token)
            self._check_timeout(state)
            if state.status == STATUS_CREATED:
                raise ProjectNotRunning(
                    "waiting for the remaining participants to join",
                    status=state.status,
                )
            return {
                "status": state.status,
                "failure": state.failure,
                "sync": state.sync.to_wire(),
                "parameters": encode_parameter_map(state.global_parameters),
            }

    def submit_local(
        self, project_id: str, username, token, sync: SyncState,
        parameters: dict, flags: dict,
    ) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_participant(state, username, token)
            self._require_active(state)
            if sync != state.sync:
                raise SyncMismatch(
                    f"submission is for ({sync.step}, {sync.round}), project is at "
                    f"({state.sync.step}, {state.sync.round})"
                )
            buffer = state.buffer
            if username in buffer.submissions:
                raise DuplicateSubmission(
                    f"{username!r} already submitted for round {buffer.round}"
                )
            self._validate_submission(state, parameters, flags)
            buffer.submissions[username] = Submission(
                username=username, sync=sync, parameters=dict(parameters),
                flags=dict(flags),
            )
            if len(buffer.submissions) == state.config.participant_count:
                state.status = STATUS_AGGREGATING
                self._try_aggregate(state)
            return {"status": state.status, "sync": state.sync.to_wire()}

    def _validate_submission(self, state: ProjectState, parameters, flags) -> None:
        for name, dtype in flags.items():
            if name not in parameters:
                raise TypeMismatch(f"flagged parameter {name!r} missing from payload")
            value = parameters[name]
            if value.dtype is not DType(dtype):
                raise TypeMismatch(
                    f"parameter {name!r} is {value.dtype.value}, flagged as "
                    f"{DType(dtype).value}"
                )
        p = state.config.modulus.p
        for name, value in parameters.items():
            if value.dtype is DType.NON_NEGATIVE_INTEGER and value.value >= p:
                raise ValueOutOfField(
                    f"parameter {name!r} = {value.value} is not below the "
                    f"modulus {p}"
                )

    def submit_compensation(
        self, project_key: str, identity: CompensatorIdentity,
        sync: SyncState, noise: dict,
    ) -> dict:
        # The compensator knows only the hashed project id; resolve it.
        project_id = self._hash_index.get(project_key)
        if project_id is None:
            raise UnknownProject("no project matches the given hash")
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_active(state)
            if sync != state.sync:
                raise SyncMismatch(
                    f"compensation is for ({sync.step}, {sync.round}), project is "
                    f"at ({state.sync.step}, {state.sync.round})"
                )
            buffer = state.buffer
            if buffer.compensation is not None:
                raise DuplicateCompensation(
                    f"round {buffer.round} already has a compensation message"
                )
            expected = state.roster.identity()
            if identity != expected:
                raise IdentityMismatch(
                    "identity hashes do not match the project roster"
                )
            buffer.compensation = CompensationRecord(
                identity=identity, sync=sync, noise=dict(noise)
            )
            if len(buffer.submissions) == state.config.participant_count:
                self._try_aggregate(state)
            return {"status": state.status, "sync": state.sync.to_wire()}

    def _try_aggregate(self, state: ProjectState) -> None:
        """Run the round's aggregation if the buffer is complete.

        Called with the project lock held, once per submission/compensation
        arrival; the buffer is replaced immediately after aggregation, so an
        aggregation can never run twice for one round.
        """
        buffer = state.buffer
        try:
            flags = buffer.agreed_flags()
        except FlagDisagreement as exc:
            self._fail(state, exc.code, str(exc))
            raise
        if flags and buffer.compensation is None:
            return  # stay in Aggregating until the compensator reports in
        if buffer.step == STEP_RESULT:
            # Result acknowledgements complete the project; no aggregation
            # and no round increment.
            state.sync = SyncState(STEP_FINISHED, state.sync.round)
            state.sync_history.append(state.sync)
            state.status = STATUS_DONE
            state.buffer = None
            self._persist(state)
            log.info("project %s finished", state.config.id)
            return
        ctx = AggregationContext(
            step=buffer.step,
            round=buffer.round,
            participant_count=state.config.participant_count,
            resolver=lambda name, dtype: compute_aggregated_parameter(
                name, dtype, buffer, state.config.modulus
            ),
        )
        try:
            outcome = state.algorithm.aggregate(ctx)
        except FedMaskError as exc:
            self._fail(state, exc.code, str(exc))
            raise
        state.global_parameters = dict(outcome.global_parameters)
        if outcome.next_step == STEP_RESULT:
            state.result_payload = state.algorithm.render_result()
        state.sync = SyncState(outcome.next_step, state.sync.round + 1)
        state.sync_history.append(state.sync)
        state.buffer = RoundBuffer(round=state.sync.round, step=state.sync.step)
        state.status = STATUS_RUNNING
        state.round_started_at = self.clock()
        self._persist(state)
        log.info("project %s advanced to (%s, %d)",
                 state.config.id, state.sync.step, state.sync.round)

    def fetch_result(self, project_id: str, username=None, token=None,
                     session=None) -> bytes:
        state = self._state(project_id)
        allowed = False
        if username or token:
            allowed = state.roster.holds(username or "", token or "")
        if not allowed and session:
            allowed = self._sessions.get(session) == state.creator
        if not allowed:
            raise NotParticipant("result access requires participant or creator credentials")
        if state.result_payload is None:
            raise ResultNotReady(f"project is {state.status}; no result yet")
        return state.result_payload

    def algorithm_state(self, project_id: str):
        """The live server-side algorithm instance (None before the start)."""
        return self._state(project_id).algorithm

    def fetch_status(self, project_id: str, username=None, token=None,
                     session=None) -> dict:
        state = self._state(project_id)
        allowed = False
        if username or token:
            allowed = state.roster.holds(username or "", token or "")
        if not allowed and session:
            allowed = self._sessions.get(session) == state.creator
        if not allowed:
            raise NotParticipant("status access requires participant or creator credentials")
        self._check_timeout(state)
        buffer = state.buffer
        return {
            "status": state.status,
            "failure": state.failure,
            "sync": state.sync.to_wire(),
            "participant_count": state.config.participant_count,
            "joined": state.roster.joined,
            "submitted": len(buffer.submissions) if buffer else 0,
            "compensated": bool(buffer and buffer.compensation),
            "result_ready": state.result_payload is not None,
        }
