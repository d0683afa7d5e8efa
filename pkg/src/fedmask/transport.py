"""Client-side transport abstraction.

Every component that talks to a server or compensator goes through a
Transport, which takes (method, path, query, headers, body) and returns a
Response. Two implementations exist: HttpTransport speaks real HTTP with
the requests library, and the simulation network provides an in-memory
one that calls the service object directly. Because both feed the same
request tuple into the same handler code, behaviour over the wire and in
simulation is identical by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import requests

from .errors import EncodingError, FedMaskError, ServerUnreachable, error_from_code
from .protocol import canonical_json_bytes, parse_json_bytes

log = logging.getLogger(__name__)


@dataclass
class Response:
    status: int
    body: bytes = b""

    def json(self):
        if not self.body:
            return None
        return parse_json_bytes(self.body)

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def unwrap(self):
        """Return the parsed body, raising the typed error on failure.

        Error bodies carry {"error": {"code": ..., "message": ...}}; the code
        names an exception class so the client re-raises what the server
        raised.
        """
        if self.ok:
            return self.json()
        details = None
        try:
            payload = self.json() or {}
            err = payload.get("error", {})
            code = err.get("code", "FedMaskError")
            message = err.get("message", f"request failed with status {self.status}")
            if isinstance(err.get("details"), dict):
                details = err["details"]
        except EncodingError:
            code, message = "FedMaskError", f"request failed with status {self.status}"
        raise error_from_code(code, message, details)


class Transport:
    """Interface: request(method, path, query=None, headers=None, body=None)."""

    def request(self, method, path, *, query=None, headers=None, body=None) -> Response:
        raise NotImplementedError

    def get(self, path, *, query=None, headers=None) -> Response:
        return self.request("GET", path, query=query, headers=headers)

    def post_json(self, path, obj, *, query=None, headers=None) -> Response:
        return self.request(
            "POST", path, query=query, headers=headers, body=canonical_json_bytes(obj)
        )


@dataclass
class HttpTransport(Transport):
    base_url: str
    timeout: float = 30.0
    session: requests.Session = field(default_factory=requests.Session)

    def request(self, method, path, *, query=None, headers=None, body=None) -> Response:
        url = self.base_url.rstrip("/") + path
        try:
            resp = self.session.request(
                method,
                url,
                params=query or None,
                headers=headers or None,
                data=body,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ServerUnreachable(f"{method} {url}: {exc}") from exc
        return Response(status=resp.status_code, body=resp.content)


def error_body(exc: FedMaskError) -> bytes:
    """Canonical JSON error envelope for a protocol exception."""
    envelope = {"code": exc.code, "message": str(exc)}
    details = exc.details()
    if details:
        envelope["details"] = details
    return canonical_json_bytes({"error": envelope})
