"""In-memory message fabric for single-process simulation runs.

Components register their api handler under a virtual URL; transports carry
requests to them through direct calls while recording every message, in
both directions, as TraceEvents. The recorded payloads are the same
canonical bytes an HTTP transport would put on the wire, which is what
makes trace-level privacy assertions meaningful.
"""

from __future__ import annotations

import base64
import threading
from dataclasses import dataclass
from urllib.parse import parse_qsl, urlsplit

from ..errors import ServerUnreachable
from ..transport import Response, Transport


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    timestamp: float
    source: str
    destination: str
    kind: str  # "request" or "response"
    method: str
    endpoint: str
    payload: bytes
    status: int | None = None

    def to_wire(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "source": self.source,
            "destination": self.destination,
            "kind": self.kind,
            "method": self.method,
            "endpoint": self.endpoint,
            "payload": base64.b64encode(self.payload).decode("ascii"),
            "status": self.status,
        }


class LogicalClock:
    """Deterministic clock: every reading advances time by a fixed step."""

    def __init__(self, start: float = 0.0, step: float = 0.001):
        self._now = start
        self._step = step
        self._lock = threading.Lock()

    def time(self) -> float:
        with self._lock:
            self._now = round(self._now + self._step, 9)
            return self._now


class Router:
    """Address book plus trace recorder; the single serialization point."""

    def __init__(self, clock: LogicalClock):
        self.clock = clock
        self.events: list = []
        self._apis: dict = {}
        self._names: dict = {}
        self._lock = threading.Lock()
        self._seq = 0

    def register(self, url: str, name: str, api) -> None:
        self._apis[url] = api
        self._names[url] = name

    def transport(self, source: str, url: str) -> "MemTransport":
        return MemTransport(self, source, url)

    def record(self, **fields) -> None:
        with self._lock:
            self._seq += 1
            self.events.append(
                TraceEvent(seq=self._seq, timestamp=self.clock.time(), **fields)
            )

    def deliver(self, source, url, method, path, query, headers, body) -> Response:
        api = self._apis.get(url)
        if api is None:
            raise ServerUnreachable(f"no component registered at {url}")
        destination = self._names[url]
        endpoint = path if not query else path + "?" + "&".join(
            f"{k}={v}" for k, v in sorted(query.items())
        )
        self.record(
            source=source, destination=destination, kind="request",
            method=method, endpoint=endpoint, payload=body,
        )
        status, payload, _content_type = api.handle(method, path, query, headers, body)
        self.record(
            source=destination, destination=source, kind="response",
            method=method, endpoint=endpoint, payload=payload, status=status,
        )
        return Response(status=status, body=payload)


class MemTransport(Transport):
    """Transport bound to one sender identity and one destination URL."""

    def __init__(self, router: Router, source: str, base_url: str):
        self.router = router
        self.source = source
        self.base_url = base_url

    def request(self, method, path, *, query=None, headers=None, body=None) -> Response:
        split = urlsplit(path)
        query = dict(query or {})
        query.update(parse_qsl(split.query))
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        return self.router.deliver(
            self.source, self.base_url, method, split.path, query, headers, body or b""
        )
