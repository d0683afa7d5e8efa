"""Participant runtime: join flow, training loop, masking, dual dispatch.

The loop polls the server for the current (step, round), invokes the
algorithm for new steps, splits every flagged parameter into a noise share
and a masked share, then sends the masked map to the server and the noise
map to the compensator. Unflagged parameters travel to the server in clear;
nothing about the dataset or model ever goes to the compensator.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ..algorithms import client_algorithm
from ..errors import (
    DuplicateSubmission,
    ProjectNotRunning,
    ServerUnreachable,
    SyncMismatch,
    UserDeclined,
)
from ..identity import sha256_hex
from ..masking import RngHandle, field_share, real_share
from ..protocol import (
    DType,
    ParameterValue,
    ProjectConfig,
    STATUS_ABORTED,
    STATUS_CREATED,
    STATUS_DONE,
    STATUS_FAILED,
    STEP_FINISHED,
    STEP_RESULT,
    SyncState,
    decode_parameter_map,
    encode_flags,
    encode_parameter_map,
)
from ..transport import Transport

log = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL = 1.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 1.0


@dataclass
class ClientSession:
    """Everything a participant needs between CLI invocations."""

    username: str
    token: str
    project_id: str
    server_url: str
    compensator_url: str
    config: ProjectConfig

    def auth_headers(self) -> dict:
        return {"X-Username": self.username, "X-Token": self.token}

    def to_wire(self) -> dict:
        return {
            "username": self.username,
            "token": self.token,
            "project_id": self.project_id,
            "server_url": self.server_url,
            "compensator_url": self.compensator_url,
            "config": self.config.to_wire(),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ClientSession":
        return cls(
            username=obj["username"],
            token=obj["token"],
            project_id=obj["project_id"],
            server_url=obj["server_url"],
            compensator_url=obj["compensator_url"],
            config=ProjectConfig.from_wire(obj["config"]),
        )


def join_flow(
    server: Transport,
    project_id: str,
    username: str,
    password: str,
    token: str,
    server_url: str,
    compensator_url: str,
    confirm=None,
) -> ClientSession:
    """Fetch project info, ask for consent, then join and bind the token.

    ``confirm`` receives the info summary and returns a boolean; a refusal
    raises UserDeclined before anything binds and before any data is read.
    """
    info = server.get(f"/projects/{project_id}/info").unwrap()
    if confirm is not None and not confirm(info):
        raise UserDeclined("participant declined the project at the consent prompt")
    joined = server.post_json(
        f"/projects/{project_id}/join",
        {"username": username, "password": password, "token": token},
    ).unwrap()
    config = ProjectConfig.from_wire(joined["project"])
    return ClientSession(
        username=username,
        token=token,
        project_id=project_id,
        server_url=server_url,
        compensator_url=compensator_url,
        config=config,
    )


class ClientRunner:
    """Drives one participant through a project.

    ``step()`` performs one poll (and, when the project advanced, one round
    of local work) and reports "working", "waiting", or "done"; ``run()``
    loops over it with sleeps. The split exists so the simulation harness
    can interleave many clients deterministically in one thread.
    """

    def __init__(
        self,
        session: ClientSession,
        data: np.ndarray,
        server: Transport,
        compensator: Transport,
        rng: RngHandle,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        sleep=time.sleep,
        masking_enabled: bool = True,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
    ):
        self.session = session
        self.server = server
        self.compensator = compensator
        self.rng = rng
        self.poll_interval = poll_interval
        self.sleep = sleep
        self.masking_enabled = masking_enabled
        self.retries = retries
        self.backoff = backoff
        self.algorithm = client_algorithm(session.config.algorithm)(
            data, session.config.hyperparameters
        )
        self.last_processed: SyncState | None = None
        self.final_status: str | None = None
        self.result_payload: bytes | None = None

    # -- one unit of progress ---------------------------------------------------

    def step(self) -> str:
        if self.final_status is not None:
            return "done"
        try:
            state = self._request(
                lambda: self.server.get(
                    f"/projects/{self.session.project_id}/global",
                    headers=self.session.auth_headers(),
                ).unwrap()
            )
        except ProjectNotRunning as exc:
            # The global endpoint only rejects before the start, so an error
            # without an explicit terminal status means the roster is still
            # filling up.
            if exc.status in ("", None, STATUS_CREATED):
                return "waiting"
            self.final_status = exc.status
            return "done"
        status = state.get("status")
        if status in (STATUS_FAILED, STATUS_ABORTED):
            self.final_status = status
            log.warning("project ended with %s: %s", status, state.get("failure"))
            return "done"
        sync = SyncState.from_wire(state["sync"])
        if sync == self.last_processed:
            return "waiting"
        if sync.step == STEP_FINISHED:
            self.final_status = STATUS_DONE
            return "done"
        try:
            if sync.step == STEP_RESULT:
                self._handle_result(sync)
            else:
                self._handle_algorithm_step(
                    sync, decode_parameter_map(state.get("parameters", {}))
                )
        except ProjectNotRunning as exc:
            # The project reached a terminal state while this round was in
            # flight; report that instead of crashing mid-send.
            self.final_status = exc.status or STATUS_FAILED
            return "done"
        self.last_processed = sync
        return "working"

    def run(self) -> str:
        while True:
            outcome = self.step()
            if outcome == "done":
                return self.final_status
            if outcome == "waiting":
                self.sleep(self.poll_interval)

    # -- round handling ---------------------------------------------------------

    def _handle_result(self, sync: SyncState) -> None:
        self.result_payload = self._request(
            lambda: self._fetch_result_bytes()
        )
        self._submit_local(sync, {}, {})
        log.info("result downloaded (%d bytes)", len(self.result_payload))

    def _fetch_result_bytes(self) -> bytes:
        response = self.server.get(
            f"/projects/{self.session.project_id}/result",
            headers=self.session.auth_headers(),
        )
        if not response.ok:
            response.unwrap()
        return response.body

    def _handle_algorithm_step(self, sync: SyncState, global_parameters: dict) -> None:
        self.algorithm.begin_step()
        self.algorithm.compute_local_parameters(sync.step, global_parameters)
        parameters = dict(self.algorithm.local_parameters)
        flags = dict(self.algorithm.compensator_flags)
        if not self.masking_enabled:
            # Debug mode: everything travels in clear and no compensation
            # round happens; results must match the masked run.
            flags = {}
        masked, noise = self._split_shares(parameters, flags)
        self._submit_local(sync, masked, flags)
        if flags:
            self._submit_noise(sync, noise, flags)

    def _split_shares(self, parameters: dict, flags: dict):
        """Replace each flagged parameter with its masked share.

        Returns (outbound parameter map, noise map). Unflagged parameters
        pass through untouched; for flagged ones the raw value never leaves
        this method.
        """
        outbound = dict(parameters)
        noise_map = {}
        spec = self.session.config.noise_variance
        modulus = self.session.config.modulus
        for name in sorted(flags):
            value = parameters[name]
            dtype = flags[name]
            if dtype is DType.NON_NEGATIVE_INTEGER:
                noise, masked = field_share(np.array([value.value]), modulus, self.rng)
                outbound[name] = ParameterValue.non_negative_integer(int(masked[0]))
                noise_map[name] = ParameterValue.non_negative_integer(int(noise[0]))
            elif dtype is DType.FLOAT:
                noise, masked = real_share(np.array([value.value]), spec, self.rng)
                outbound[name] = ParameterValue.float_scalar(float(masked[0]))
                noise_map[name] = ParameterValue.float_scalar(float(noise[0]))
            else:
                noise, masked = real_share(value.value, spec, self.rng)
                outbound[name] = ParameterValue.float_array(masked)
                noise_map[name] = ParameterValue.float_array(noise)
        return outbound, noise_map

    def _local_body(self, sync: SyncState, parameters: dict, flags: dict) -> dict:
        return {
            "sync": sync.to_wire(),
            "parameters": encode_parameter_map(parameters),
            "flags": encode_flags(flags),
        }

    def _submit_local(self, sync: SyncState, parameters: dict, flags: dict) -> None:
        body = self._local_body(sync, parameters, flags)
        try:
            self._request(
                lambda: self.server.post_json(
                    f"/projects/{self.session.project_id}/local",
                    body,
                    headers=self.session.auth_headers(),
                ).unwrap()
            )
        except DuplicateSubmission:
            # A lost response led to a resend; the first copy counted.
            log.info("submission for round %d was already recorded", sync.round)
        except SyncMismatch:
            # The project moved on while this submission was in flight; the
            # next poll picks up the new step.
            log.warning("submission for round %d arrived stale", sync.round)

    def _noise_body(self, sync: SyncState, noise: dict, flags: dict) -> dict:
        return {
            "project_hash": sha256_hex(self.session.project_id),
            "username_hash": sha256_hex(self.session.username),
            "token_hash": sha256_hex(self.session.token),
            "participant_count": self.session.config.participant_count,
            "server_url": self.session.server_url,
            "modulus": str(self.session.config.modulus.p),
            "sync": sync.to_wire(),
            "noise": encode_parameter_map(noise),
            "dtypes": encode_flags(flags),
        }

    def _submit_noise(self, sync: SyncState, noise: dict, flags: dict) -> None:
        body = self._noise_body(sync, noise, flags)
        self._request(lambda: self.compensator.post_json("/noise", body).unwrap())

    # -- transport retry ----------------------------------------------------------

    def _request(self, call):
        """Run a transport call with exponential backoff on unreachability."""
        delay = self.backoff
        for attempt in range(self.retries + 1):
            try:
                return call()
            except ServerUnreachable:
                if attempt == self.retries:
                    raise
                self.sleep(delay)
                delay *= 2
