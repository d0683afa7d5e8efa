"""Participant runtime: dataset ingestion, consent, masking dispatch."""

import numpy as np
import pytest

from fedmask.client import ClientRunner, ClientSession, join_flow, load_dataset_csv
from fedmask.errors import (
    EmptyDataset,
    ParseError,
    ProjectNotRunning,
    ServerUnreachable,
    UserDeclined,
)
from fedmask.masking import GaussianSpec, PrimeModulus, RngHandle
from fedmask.protocol import ProjectConfig, SyncState, canonical_json_bytes
from fedmask.transport import Response, Transport


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDatasetLoading:
    def test_plain_numbers(self, tmp_path):
        data = load_dataset_csv(write(tmp_path, "1,2\n3,4\n"))
        assert data.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_header_skipped_when_no_cell_is_numeric(self, tmp_path):
        data = load_dataset_csv(write(tmp_path, "age,height\n30,180\n"))
        assert data.tolist() == [[30.0, 180.0]]

    def test_partially_numeric_first_row_is_data(self, tmp_path):
        # one numeric cell makes it a data row, so the text cell is an error
        # located at row 1, column 2
        with pytest.raises(ParseError) as err:
            load_dataset_csv(write(tmp_path, "1,x\n"))
        assert err.value.row == 1
        assert err.value.column == 2

    def test_blank_lines_skipped_but_line_numbers_preserved(self, tmp_path):
        path = write(tmp_path, "1,2\n\n3,4\n\nbad,5\n")
        with pytest.raises(ParseError) as err:
            load_dataset_csv(path)
        assert err.value.row == 5
        assert err.value.column == 1

    def test_width_mismatch_located(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_dataset_csv(write(tmp_path, "1,2\n3\n"))
        assert err.value.row == 2

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset_csv(write(tmp_path, "1\ninf\n"))
        with pytest.raises(ParseError):
            load_dataset_csv(write(tmp_path, "nan\n"))

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(EmptyDataset):
            load_dataset_csv(write(tmp_path, ""))
        with pytest.raises(EmptyDataset):
            load_dataset_csv(write(tmp_path, "a,b\n"))

    def test_scientific_notation_and_negatives(self, tmp_path):
        data = load_dataset_csv(write(tmp_path, "-1.5,2e3\n+4,.5\n"))
        assert data.tolist() == [[-1.5, 2000.0], [4.0, 0.5]]


def project_config(**overrides):
    fields = dict(
        id="proj-1",
        name="test",
        description="",
        tool="stats",
        algorithm="variance",
        hyperparameters={},
        participant_count=3,
        modulus=PrimeModulus(2**54 - 33),
        noise_variance=GaussianSpec(1e12),
    )
    fields.update(overrides)
    return ProjectConfig(**fields)


def session_for(config=None):
    return ClientSession(
        username="amy",
        token="a" * 32,
        project_id="proj-1",
        server_url="mem://server",
        compensator_url="mem://compensator",
        config=config or project_config(),
    )


class ScriptedTransport(Transport):
    """Replays canned responses per (method, path) and records requests."""

    def __init__(self):
        self.sent = []
        self.scripts = {}

    def script(self, method, path, *responses):
        self.scripts.setdefault((method, path), []).extend(responses)

    def request(self, method, path, *, query=None, headers=None, body=None):
        self.sent.append((method, path, body, headers))
        queue = self.scripts.get((method, path))
        if not queue:
            raise AssertionError(f"no scripted response for {method} {path}")
        reply = queue.pop(0) if len(queue) > 1 else queue[0]
        if isinstance(reply, Exception):
            raise reply
        return reply


def ok(obj) -> Response:
    return Response(200, canonical_json_bytes(obj))


class TestJoinFlow:
    def _server(self):
        transport = ScriptedTransport()
        info = {
            "project": project_config().to_wire(),
            "creator": "coordinator",
            "status": "Created",
        }
        transport.script("GET", "/projects/proj-1/info", ok(info))
        transport.script(
            "POST", "/projects/proj-1/join",
            ok({"project": project_config().to_wire(), "joined": 1}),
        )
        return transport

    def test_happy_path_builds_session(self):
        transport = self._server()
        seen = []
        session = join_flow(
            transport, "proj-1", "amy", "pw", "a" * 32,
            server_url="mem://server", compensator_url="mem://compensator",
            confirm=lambda info: seen.append(info) or True,
        )
        assert session.username == "amy"
        assert session.config.algorithm == "variance"
        assert seen and seen[0]["creator"] == "coordinator"
        # the join request carried the credentials
        method, path, body, _ = transport.sent[-1]
        assert path == "/projects/proj-1/join"
        assert b'"username":"amy"' in body

    def test_decline_aborts_before_joining(self):
        transport = self._server()
        with pytest.raises(UserDeclined):
            join_flow(
                transport, "proj-1", "amy", "pw", "a" * 32,
                server_url="mem://server", compensator_url="mem://compensator",
                confirm=lambda info: False,
            )
        assert [(m, p) for m, p, _, _ in transport.sent] == [
            ("GET", "/projects/proj-1/info")
        ]

    def test_session_wire_roundtrip(self):
        session = session_for()
        back = ClientSession.from_wire(session.to_wire())
        assert back.username == session.username
        assert back.config == session.config
        assert back.auth_headers() == {"X-Username": "amy", "X-Token": "a" * 32}


class TestShareSplitting:
    def _runner(self, masking=True):
        return ClientRunner(
            session_for(),
            np.array([[1.0], [2.0]]),
            server=ScriptedTransport(),
            compensator=ScriptedTransport(),
            rng=RngHandle(33),
            masking_enabled=masking,
        )

    def test_flagged_values_are_masked(self):
        from fedmask.protocol import DType, ParameterValue

        runner = self._runner()
        params = {
            "local-count": ParameterValue.non_negative_integer(2),
            "local-sum": ParameterValue.float_array([3.0]),
            "note": ParameterValue.float_scalar(1.25),
        }
        flags = {
            "local-count": DType.NON_NEGATIVE_INTEGER,
            "local-sum": DType.FLOAT_ARRAY,
        }
        outbound, noise = runner._split_shares(params, flags)
        # unflagged parameters pass through untouched
        assert outbound["note"] == params["note"]
        assert "note" not in noise
        # flagged ones are replaced; the field relation holds exactly
        p = runner.session.config.modulus.p
        assert outbound["local-count"].value == (
            (2 + noise["local-count"].value) % p
        )
        assert outbound["local-sum"].value[0] == pytest.approx(
            3.0 + noise["local-sum"].value[0]
        )
        # Gaussian noise at variance 1e12 cannot be confused with the raw value
        assert outbound["local-sum"].value[0] != 3.0

    def test_float_scalar_masking(self):
        from fedmask.protocol import DType, ParameterValue

        runner = self._runner()
        params = {"x": ParameterValue.float_scalar(-7.5)}
        outbound, noise = runner._split_shares(params, {"x": DType.FLOAT})
        assert outbound["x"].value == pytest.approx(-7.5 + noise["x"].value)

    def test_seeded_split_reproducible(self):
        from fedmask.protocol import DType, ParameterValue

        params = {"x": ParameterValue.float_array([5.0, 6.0])}
        flags = {"x": DType.FLOAT_ARRAY}
        a, an = self._runner()._split_shares(dict(params), flags)
        b, bn = self._runner()._split_shares(dict(params), flags)
        assert a["x"] == b["x"]
        assert an["x"] == bn["x"]


class TestRunnerLoop:
    def _scripted_runner(self, server, compensator=None, masking=True):
        return ClientRunner(
            session_for(),
            np.array([[1.0], [2.0]]),
            server=server,
            compensator=compensator or ScriptedTransport(),
            rng=RngHandle(42),
            poll_interval=0.0,
            sleep=lambda s: None,
            masking_enabled=masking,
        )

    def test_waits_while_roster_fills(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            Response(409, canonical_json_bytes({
                "error": {"code": "ProjectNotRunning", "message": "waiting"},
            })),
        )
        runner = self._scripted_runner(server)
        # ProjectNotRunning without a terminal status means keep polling
        assert runner.step() == "waiting"

    def test_terminal_status_survives_the_error_envelope(self):
        from fedmask.transport import error_body

        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Running", "failure": None,
                "sync": {"step": "Sum", "round": 1}, "parameters": {},
            }),
        )
        server.script(
            "POST", "/projects/proj-1/local",
            Response(409, error_body(
                ProjectNotRunning("aborted mid round", status="Aborted")
            )),
        )
        runner = self._scripted_runner(server)
        # the envelope carries the status, so the client can tell a mid
        # flight abort from a roster that has not filled yet
        assert runner.step() == "done"
        assert runner.final_status == "Aborted"

    def test_sum_round_sends_masked_and_noise(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Running", "failure": None,
                "sync": {"step": "Sum", "round": 1}, "parameters": {},
            }),
        )
        server.script(
            "POST", "/projects/proj-1/local",
            ok({"status": "Running", "sync": {"step": "Sum", "round": 1}}),
        )
        compensator = ScriptedTransport()
        compensator.script(
            "POST", "/noise", ok({"accepted": True, "stored": 1, "flushed": False}),
        )
        runner = self._scripted_runner(server, compensator)
        assert runner.step() == "working"
        local = next(b for m, p, b, _ in server.sent if p.endswith("/local"))
        noise = next(b for m, p, b, _ in compensator.sent if p == "/noise")
        # raw values never appear in the outbound local payload
        assert b'"v":"2"' not in local
        assert b'"flags":{"local-count":"nni","local-sum":"arr"}' in local
        for needle in (b"proj-1", b"amy", b"a" * 32):
            assert needle not in noise  # compensator sees hashes only
        assert b'"participant_count":3' in noise

    def test_no_masking_mode_sends_raw_and_skips_compensator(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Running", "failure": None,
                "sync": {"step": "Sum", "round": 1}, "parameters": {},
            }),
        )
        server.script(
            "POST", "/projects/proj-1/local",
            ok({"status": "Running", "sync": {"step": "Sum", "round": 1}}),
        )
        compensator = ScriptedTransport()
        runner = self._scripted_runner(server, compensator, masking=False)
        assert runner.step() == "working"
        local = next(b for m, p, b, _ in server.sent if p.endswith("/local"))
        assert b'"v":"2"' in local  # the raw count travels in clear
        assert b'"flags":{}' in local
        assert compensator.sent == []

    def test_done_when_project_finishes(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Done", "failure": None,
                "sync": {"step": "Finished", "round": 3}, "parameters": {},
            }),
        )
        runner = self._scripted_runner(server)
        assert runner.step() == "done"
        assert runner.final_status == "Done"

    def test_done_when_project_fails(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Failed", "failure": "Timeout: round 1",
                "sync": {"step": "Sum", "round": 1}, "parameters": {},
            }),
        )
        runner = self._scripted_runner(server)
        assert runner.step() == "done"
        assert runner.final_status == "Failed"

    def test_result_round_downloads_and_acknowledges(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ok({
                "status": "Running", "failure": None,
                "sync": {"step": "Result", "round": 3}, "parameters": {},
            }),
        )
        server.script(
            "GET", "/projects/proj-1/result",
            Response(200, b"column,mean,variance\n0,3.0,2.0\n"),
        )
        server.script(
            "POST", "/projects/proj-1/local",
            ok({"status": "Done", "sync": {"step": "Finished", "round": 3}}),
        )
        runner = self._scripted_runner(server)
        assert runner.step() == "working"
        assert runner.result_payload == b"column,mean,variance\n0,3.0,2.0\n"
        ack = next(b for m, p, b, _ in server.sent if p.endswith("/local"))
        assert b'"parameters":{}' in ack

    def test_unchanged_sync_waits(self):
        server = ScriptedTransport()
        state = ok({
            "status": "Running", "failure": None,
            "sync": {"step": "Sum", "round": 1}, "parameters": {},
        })
        server.script("GET", "/projects/proj-1/global", state)
        server.script(
            "POST", "/projects/proj-1/local",
            ok({"status": "Running", "sync": {"step": "Sum", "round": 1}}),
        )
        compensator = ScriptedTransport()
        compensator.script("POST", "/noise", ok({"accepted": True}))
        runner = self._scripted_runner(server, compensator)
        assert runner.step() == "working"
        assert runner.step() == "waiting"  # same sync again: nothing to do

    def test_retries_on_unreachable_server(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ServerUnreachable("connection refused"),
            ok({
                "status": "Done", "failure": None,
                "sync": {"step": "Finished", "round": 3}, "parameters": {},
            }),
        )
        runner = self._scripted_runner(server)
        assert runner.step() == "done"
        polls = [p for m, p, _, _ in server.sent if p.endswith("/global")]
        assert len(polls) == 2

    def test_gives_up_after_retry_budget(self):
        server = ScriptedTransport()
        server.script(
            "GET", "/projects/proj-1/global",
            ServerUnreachable("connection refused"),
        )
        runner = self._scripted_runner(server)
        runner.retries = 2
        with pytest.raises(ServerUnreachable):
            runner.step()
        assert len(server.sent) == 3  # initial try plus two retries
