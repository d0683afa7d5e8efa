"""Single-process simulation of a full federated run.

Builds a server, a compensator, and K clients wired through the in-memory
message fabric, drives the clients round-robin in one thread (deterministic
given the seed), and returns the result plus the complete message trace, a
witness of sensitive byte strings for privacy assertions, and a centralized
oracle computed directly from the raw partitions.

The same scenario can instead be run over real HTTP loopback, which reuses
every component unchanged; result payloads must come out byte-identical.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..client.runner import ClientRunner, ClientSession, join_flow
from ..compensator import CompensatorApi, CompensatorCore
from ..errors import InvalidConfig
from ..httpserve import ApiHttpServer
from ..masking import RngHandle
from ..protocol import STATUS_DONE, canonical_json_bytes, encode_parameter, encode_parameter_map
from ..server import ServerApi, ServerCore
from ..storage import SqliteStorage
from ..transport import HttpTransport
from .memnet import LogicalClock, Router, TraceEvent

FAULT_NOISE_TO_SERVER = "noise-to-server"
FAULT_FORWARD_INDIVIDUAL_NOISE = "forward-individual-noise"
FAULTS = (FAULT_NOISE_TO_SERVER, FAULT_FORWARD_INDIVIDUAL_NOISE)

_MAX_IDLE_SWEEPS = 1000


class SimulationError(Exception):
    """A simulated project did not finish; carries the trace up to failure."""

    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass
class Witness:
    """Sensitive byte strings collected where they legitimately exist.

    Each entry is the canonical wire encoding the value would have if it
    were ever serialized, so substring checks against traced payloads are
    exact, not heuristic.
    """

    noise_values: list = dc_field(default_factory=list)      # individual noise shares
    masked_values: list = dc_field(default_factory=list)     # masked model values
    raw_flagged_values: list = dc_field(default_factory=list)  # pre-masking values
    dataset_blobs: list = dc_field(default_factory=list)     # raw dataset payloads
    tokens: list = dc_field(default_factory=list)            # raw access tokens
    usernames: list = dc_field(default_factory=list)
    flagged_rounds: set = dc_field(default_factory=set)

    def add_dataset(self, client: str, data: np.ndarray) -> None:
        whole = encode_parameter(_as_float_array(data))
        self.dataset_blobs.append((client, whole["data"].encode("ascii")))
        if data.ndim == 2:
            for column in range(data.shape[1]):
                enc = encode_parameter(_as_float_array(data[:, column]))
                self.dataset_blobs.append((client, enc["data"].encode("ascii")))


def _as_float_array(values):
    from ..protocol import ParameterValue

    return ParameterValue.float_array(np.asarray(values, dtype=np.float64))


def _encoding(value) -> bytes:
    return canonical_json_bytes(encode_parameter(value))


class WitnessingRunner(ClientRunner):
    """Client runner that reports sensitive values to the shared witness."""

    def __init__(self, *args, witness: Witness, client_name: str, **kwargs):
        super().__init__(*args, **kwargs)
        self.witness = witness
        self.client_name = client_name

    def _split_shares(self, parameters, flags):
        outbound, noise_map = super()._split_shares(parameters, flags)
        for name in sorted(flags):
            masked_enc = _encoding(outbound[name])
            noise_enc = _encoding(noise_map[name])
            if masked_enc == noise_enc:
                # Masking a zero value makes the masked share and the noise
                # share coincide bitwise; witnessing either would turn the
                # legitimate copies into false byte-scan hits.
                continue
            self.witness.raw_flagged_values.append(
                (self.client_name, name, _encoding(parameters[name]))
            )
            self.witness.masked_values.append((self.client_name, name, masked_enc))
            self.witness.noise_values.append((self.client_name, name, noise_enc))
        return outbound, noise_map

    def _submit_noise(self, sync, noise, flags):
        self.witness.flagged_rounds.add(sync.round)
        super()._submit_noise(sync, noise, flags)


class NoiseLeakingRunner(WitnessingRunner):
    """Fault injection: sends its noise shares to the server too."""

    def _split_shares(self, parameters, flags):
        outbound, noise_map = super()._split_shares(parameters, flags)
        self._leak = noise_map
        return outbound, noise_map

    def _local_body(self, sync, parameters, flags):
        body = super()._local_body(sync, parameters, flags)
        leak = self.__dict__.pop("_leak", None)
        if leak:
            body["noise_preview"] = encode_parameter_map(leak)
        return body


class ForwardingCompensator(CompensatorCore):
    """Fault injection: forwards one member's individual noise to the server."""

    def _compensation_body(self, pending):
        body = super()._compensation_body(pending)
        first = sorted(pending.members)[0]
        body["member_noise"] = {
            "username_hash": first,
            "noise": encode_parameter_map(pending.members[first][1]),
        }
        return body


@dataclass
class SimulationReport:
    project_id: str
    result: bytes
    statuses: list
    trace: list
    witness: Witness | None
    oracle: dict
    sync_history: list
    server_core: ServerCore
    compensator_core: CompensatorCore

    def write_trace(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for event in self.trace:
                fh.write(json.dumps(event.to_wire(), sort_keys=True) + "\n")


def centralized_variance_oracle(partitions) -> dict:
    """Plain single-machine computation of everything the run aggregates."""
    stacked = np.vstack([np.asarray(p, dtype=np.float64) for p in partitions])
    count = int(stacked.shape[0])
    colsum = np.sum(stacked, axis=0, dtype=np.float64)
    mean = colsum / count
    sse = np.sum((stacked - mean) ** 2, axis=0, dtype=np.float64)
    return {
        "count": count,
        "sum": colsum,
        "mean": mean,
        "sse": sse,
        "variance": sse / count,
    }


def run_simulation(
    clients: int,
    partitions,
    algorithm: str = "variance",
    seed: int = 0,
    masking: bool = True,
    fault: str | None = None,
    transport: str = "memory",
    round_timeout: float = 300.0,
    hyperparameters: dict | None = None,
) -> SimulationReport:
    """Run one complete federated project and return everything observable.

    transport "memory" uses the traced in-memory fabric; "http" serves the
    same server and compensator over loopback HTTP (no trace, no witness).
    """
    if clients < 3:
        raise InvalidConfig(f"at least three clients required, got {clients}")
    partitions = [np.asarray(p, dtype=np.float64) for p in partitions]
    if len(partitions) != clients:
        raise InvalidConfig(
            f"{clients} clients need {clients} partitions, got {len(partitions)}"
        )
    if fault is not None and fault not in FAULTS:
        raise InvalidConfig(f"unknown fault {fault!r}")
    if transport not in ("memory", "http"):
        raise InvalidConfig(f"unknown transport {transport!r}")

    master = random.Random(seed)
    server_rng = random.Random(master.getrandbits(64))
    client_seeds = [master.getrandbits(63) for _ in range(clients)]

    if transport == "memory":
        return _run_memory(
            clients, partitions, algorithm, server_rng, client_seeds,
            masking, fault, round_timeout, hyperparameters,
        )
    return _run_http(
        clients, partitions, algorithm, server_rng, client_seeds,
        masking, fault, round_timeout, hyperparameters,
    )


def _project_draft(algorithm, clients, hyperparameters) -> dict:
    return {
        "name": "simulated run",
        "description": "driven by the simulation harness",
        "tool": "stats",
        "algorithm": algorithm,
        "participant_count": clients,
        "hyperparameters": encode_parameter_map(hyperparameters or {}),
    }


def _run_memory(
    clients, partitions, algorithm, server_rng, client_seeds,
    masking, fault, round_timeout, hyperparameters,
):
    clock = LogicalClock()
    router = Router(clock)
    server_core = ServerCore(
        storage=SqliteStorage(":memory:"),
        clock=clock.time,
        rng=server_rng,
        round_timeout=round_timeout,
    )
    router.register("mem://server", "server", ServerApi(server_core))
    comp_cls = (
        ForwardingCompensator if fault == FAULT_FORWARD_INDIVIDUAL_NOISE
        else CompensatorCore
    )
    comp_core = comp_cls(
        connect=lambda url: router.transport("compensator", url),
        clock=clock.time,
        sleep=lambda s: None,
        round_timeout=round_timeout,
    )
    router.register("mem://compensator", "compensator", CompensatorApi(comp_core))

    witness = Witness()
    project_id, tokens = _stage_project(
        router.transport("coordinator", "mem://server"),
        algorithm, clients, hyperparameters,
    )
    runners = []
    for i in range(clients):
        name = f"client-{i + 1}"
        server_transport = router.transport(name, "mem://server")
        session = _signup_and_join(
            server_transport, project_id, name, tokens[i],
            "mem://server", "mem://compensator",
        )
        witness.tokens.append(tokens[i])
        witness.usernames.append(name)
        witness.add_dataset(name, partitions[i])
        runner_cls = (
            NoiseLeakingRunner
            if fault == FAULT_NOISE_TO_SERVER and i == 0
            else WitnessingRunner
        )
        runners.append(
            runner_cls(
                session,
                partitions[i],
                server=server_transport,
                compensator=router.transport(name, "mem://compensator"),
                rng=RngHandle(client_seeds[i]),
                sleep=lambda s: None,
                masking_enabled=masking,
                witness=witness,
                client_name=name,
            )
        )

    _drive_round_robin(runners, router.events)
    return _build_report(
        project_id, runners, partitions, router.events, witness,
        server_core, comp_core,
    )


def _run_http(
    clients, partitions, algorithm, server_rng, client_seeds,
    masking, fault, round_timeout, hyperparameters,
):
    server_core = ServerCore(
        storage=SqliteStorage(":memory:"),
        rng=server_rng,
        round_timeout=round_timeout,
    )
    server_http = ApiHttpServer(ServerApi(server_core)).start()
    comp_cls = (
        ForwardingCompensator if fault == FAULT_FORWARD_INDIVIDUAL_NOISE
        else CompensatorCore
    )
    comp_core = comp_cls(
        connect=lambda url: HttpTransport(url),
        round_timeout=round_timeout,
        backoff=0.05,
    )
    comp_http = ApiHttpServer(CompensatorApi(comp_core)).start()
    try:
        witness = Witness()
        project_id, tokens = _stage_project(
            HttpTransport(server_http.url), algorithm, clients, hyperparameters
        )
        runners = []
        for i in range(clients):
            name = f"client-{i + 1}"
            server_transport = HttpTransport(server_http.url)
            session = _signup_and_join(
                server_transport, project_id, name, tokens[i],
                server_http.url, comp_http.url,
            )
            runner_cls = (
                NoiseLeakingRunner
                if fault == FAULT_NOISE_TO_SERVER and i == 0
                else WitnessingRunner
            )
            runners.append(
                runner_cls(
                    session,
                    partitions[i],
                    server=server_transport,
                    compensator=HttpTransport(comp_http.url),
                    rng=RngHandle(client_seeds[i]),
                    sleep=time.sleep,
                    poll_interval=0.01,
                    masking_enabled=masking,
                    witness=witness,
                    client_name=name,
                )
            )
        _drive_round_robin(runners, [], idle_wait=0.002)
        return _build_report(
            project_id, runners, partitions, [], None, server_core, comp_core,
        )
    finally:
        server_http.stop()
        comp_http.stop()


def _stage_project(coordinator, algorithm, clients, hyperparameters):
    coordinator.post_json(
        "/auth/signup", {"username": "coordinator", "password": "pw-coordinator"}
    ).unwrap()
    session = coordinator.post_json(
        "/auth/login", {"username": "coordinator", "password": "pw-coordinator"}
    ).unwrap()["session"]
    created = coordinator.post_json(
        "/projects",
        _project_draft(algorithm, clients, hyperparameters),
        headers={"X-Session": session},
    ).unwrap()
    project_id = created["project"]["id"]
    tokens = coordinator.post_json(
        f"/projects/{project_id}/tokens",
        {},
        query={"count": str(clients)},
        headers={"X-Session": session},
    ).unwrap()["tokens"]
    return project_id, tokens


def _signup_and_join(
    server_transport, project_id, name, token, server_url, compensator_url
) -> ClientSession:
    password = f"pw-{name}"
    server_transport.post_json(
        "/auth/signup", {"username": name, "password": password}
    ).unwrap()
    return join_flow(
        server_transport,
        project_id,
        name,
        password,
        token,
        server_url=server_url,
        compensator_url=compensator_url,
    )


def _drive_round_robin(runners, trace, idle_wait: float = 0.0) -> None:
    """Step every live runner in turn until all finish or nothing moves."""
    idle_sweeps = 0
    while True:
        outcomes = [
            runner.step() if runner.final_status is None else "done"
            for runner in runners
        ]
        if all(o == "done" for o in outcomes):
            return
        if any(o == "working" for o in outcomes):
            idle_sweeps = 0
        else:
            idle_sweeps += 1
            if idle_sweeps > _MAX_IDLE_SWEEPS:
                raise SimulationError(
                    "simulation stalled: no client made progress", trace
                )
            if idle_wait:
                time.sleep(idle_wait)


def _build_report(
    project_id, runners, partitions, trace, witness, server_core, comp_core
) -> SimulationReport:
    statuses = [runner.final_status for runner in runners]
    if any(status != STATUS_DONE for status in statuses):
        state = server_core._projects.get(project_id)
        failure = state.failure if state else None
        raise SimulationError(
            f"project ended with statuses {statuses}; failure: {failure}",
            trace[-40:],
        )
    payloads = {runner.result_payload for runner in runners}
    if len(payloads) != 1:
        raise SimulationError("clients downloaded differing result files", trace[-40:])
    state = server_core._projects[project_id]
    return SimulationReport(
        project_id=project_id,
        result=payloads.pop(),
        statuses=statuses,
        trace=list(trace),
        witness=witness,
        oracle=centralized_variance_oracle(partitions),
        sync_history=list(state.sync_history),
        server_core=server_core,
        compensator_core=comp_core,
    )
