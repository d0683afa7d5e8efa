"""REST surface of the noise-aggregation service: a single endpoint."""

from __future__ import annotations

import logging

from ..errors import FedMaskError
from ..protocol import canonical_json_bytes, parse_json_bytes
from ..transport import error_body
from .core import CompensatorCore

log = logging.getLogger(__name__)

JSON_TYPE = "application/json"

_HTTP_STATUS = {
    "DuplicateNoise": 409,
    "InconsistentRound": 409,
    "MalformedEnvelope": 400,
    "EncodingError": 400,
}


class CompensatorApi:
    def __init__(self, core: CompensatorCore):
        self.core = core

    def handle(self, method, path, query, headers, body):
        """Dispatch one request; returns (status, body bytes, content type)."""
        try:
            if path.rstrip("/") == "/noise" and method == "POST":
                payload = parse_json_bytes(body or b"")
                out = self.core.accept_noise(payload)
                return 200, canonical_json_bytes(out), JSON_TYPE
            return 404, canonical_json_bytes(
                {"error": {"code": "NotFound",
                           "message": f"no route for {method} {path}"}}
            ), JSON_TYPE
        except FedMaskError as exc:
            return _HTTP_STATUS.get(exc.code, 400), error_body(exc), JSON_TYPE
        except Exception:  # pragma: no cover - last-resort guard
            log.exception("unhandled error for %s %s", method, path)
            return 500, canonical_json_bytes(
                {"error": {"code": "InternalError", "message": "unexpected failure"}}
            ), JSON_TYPE
