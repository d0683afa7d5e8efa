"""REST surface of the coordination service.

Maps (method, path, query, headers, body) onto ServerCore operations and
typed errors onto HTTP statuses. Both the real HTTP listener and the
in-memory simulation transport call ``handle``, so the two modes exercise
byte-identical request handling.

Authentication conventions:
  coordinator endpoints read the session id from the X-Session header;
  participant endpoints read X-Username and X-Token.
"""

from __future__ import annotations

import logging

from ..errors import EncodingError, FedMaskError, MalformedHash
from ..identity import CompensatorIdentity
from ..protocol import (
    SyncState,
    canonical_json_bytes,
    decode_flags,
    decode_parameter_map,
    parse_json_bytes,
)
from ..transport import error_body
from .core import ServerCore

log = logging.getLogger(__name__)

JSON_TYPE = "application/json"
BINARY_TYPE = "application/octet-stream"

# HTTP status per error code; anything unlisted is a 400.
_HTTP_STATUS = {
    "BadCredentials": 403,
    "NotParticipant": 403,
    "IdentityMismatch": 403,
    "UnknownProject": 404,
    "UsernameTaken": 409,
    "TokenAlreadyBound": 409,
    "RosterFull": 409,
    "ProjectNotRunning": 409,
    "SyncMismatch": 409,
    "DuplicateSubmission": 409,
    "DuplicateCompensation": 409,
    "MissingCompensation": 409,
    "FlagDisagreement": 409,
    "ResultNotReady": 409,
    "DivisionByZero": 409,
}


class ServerApi:
    def __init__(self, core: ServerCore):
        self.core = core

    def handle(self, method, path, query, headers, body):
        """Dispatch one request; returns (status, body bytes, content type)."""
        try:
            return self._route(method, path, query or {}, headers or {}, body or b"")
        except FedMaskError as exc:
            return _HTTP_STATUS.get(exc.code, 400), error_body(exc), JSON_TYPE
        except Exception:  # pragma: no cover - last-resort guard
            log.exception("unhandled error for %s %s", method, path)
            return 500, canonical_json_bytes(
                {"error": {"code": "InternalError", "message": "unexpected failure"}}
            ), JSON_TYPE

    def _route(self, method, path, query, headers, body):
        parts = [p for p in path.split("/") if p]
        if parts == ["auth", "signup"] and method == "POST":
            payload = _json_object(body)
            out = self.core.signup(
                str(payload.get("username", "")), str(payload.get("password", ""))
            )
            return 201, canonical_json_bytes(out), JSON_TYPE
        if parts == ["auth", "login"] and method == "POST":
            payload = _json_object(body)
            out = self.core.login(
                str(payload.get("username", "")), str(payload.get("password", ""))
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if parts == ["projects"] and method == "POST":
            out = self.core.create_project(headers.get("x-session"), _json_object(body))
            return 201, canonical_json_bytes(out), JSON_TYPE
        if parts == ["projects"] and method == "GET":
            out = self.core.list_projects(headers.get("x-session"))
            return 200, canonical_json_bytes(out), JSON_TYPE
        if len(parts) == 3 and parts[0] == "projects":
            return self._route_project(method, parts[1], parts[2], query, headers, body)
        if len(parts) == 2 and parts[0] == "projects" and method == "GET":
            out = self.core.fetch_info(parts[1])
            return 200, canonical_json_bytes(out), JSON_TYPE
        return 404, canonical_json_bytes(
            {"error": {"code": "NotFound", "message": f"no route for {method} {path}"}}
        ), JSON_TYPE

    def _route_project(self, method, project_id, action, query, headers, body):
        session = headers.get("x-session")
        username = headers.get("x-username")
        token = headers.get("x-token")
        if action == "tokens" and method == "POST":
            count = query.get("count")
            out = self.core.issue_tokens(
                session, project_id, int(count) if count is not None else None
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "join" and method == "POST":
            payload = _json_object(body)
            out = self.core.join(
                project_id,
                str(payload.get("username", "")),
                str(payload.get("password", "")),
                str(payload.get("token", "")),
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "info" and method == "GET":
            out = self.core.fetch_info(project_id)
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "global" and method == "GET":
            out = self.core.fetch_global(project_id, username, token)
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "local" and method == "POST":
            payload = _json_object(body)
            out = self.core.submit_local(
                project_id,
                username,
                token,
                SyncState.from_wire(payload.get("sync", {})),
                decode_parameter_map(payload.get("parameters", {})),
                decode_flags(payload.get("flags", {})),
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "compensation" and method == "POST":
            payload = _json_object(body)
            identity_obj = payload.get("identity")
            if not isinstance(identity_obj, dict):
                raise MalformedHash("compensation payload lacks an identity object")
            out = self.core.submit_compensation(
                project_id,
                CompensatorIdentity.from_wire(identity_obj),
                SyncState.from_wire(payload.get("sync", {})),
                decode_parameter_map(payload.get("noise", {})),
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "result" and method == "GET":
            payload = self.core.fetch_result(
                project_id, username=username, token=token, session=session
            )
            return 200, payload, BINARY_TYPE
        if action == "status" and method == "GET":
            out = self.core.fetch_status(
                project_id, username=username, token=token, session=session
            )
            return 200, canonical_json_bytes(out), JSON_TYPE
        if action == "abort" and method == "POST":
            out = self.core.abort(session, project_id)
            return 200, canonical_json_bytes(out), JSON_TYPE
        return 404, canonical_json_bytes(
            {"error": {"code": "NotFound",
                       "message": f"no route for {method} projects/{action}"}}
        ), JSON_TYPE


def _json_object(body: bytes) -> dict:
    obj = parse_json_bytes(body) if body else {}
    if not isinstance(obj, dict):
        raise EncodingError("request body must be a JSON object")
    return obj
