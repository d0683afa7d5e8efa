"""Serve any handler object (server or compensator API) over real HTTP.

The api object exposes handle(method, path, query, headers, body) and this
module adapts it to the stdlib threading HTTP server: one construction here
rather than per service, so both services behave identically on the wire
and in the in-memory transport.
"""

from __future__ import annotations

import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qsl, urlsplit

log = logging.getLogger(__name__)

# Path prefixes owned by the REST API; everything else may be static.
_API_PREFIXES = ("/auth", "/projects", "/noise")


def _make_handler(api, webroot: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self, method):
            split = urlsplit(self.path)
            query = dict(parse_qsl(split.query))
            headers = {k.lower(): v for k, v in self.headers.items()}
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, payload, content_type = api.handle(
                method, split.path, query, headers, body
            )
            self._reply(status, payload, content_type)

        def _reply(self, status, payload, content_type):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def _serve_static(self, path: str) -> bool:
            """Serve a file from the webroot; True when the path was static.

            API prefixes always win, so enabling a webroot can never shadow
            an endpoint. Resolution is confined to the webroot directory.
            """
            if webroot is None or path.startswith(_API_PREFIXES):
                return False
            relative = path.lstrip("/") or "index.html"
            candidate = (webroot / relative).resolve()
            try:
                candidate.relative_to(webroot)
            except ValueError:
                self._reply(404, b"not found", "text/plain")
                return True
            if candidate.is_dir():
                candidate = candidate / "index.html"
            if not candidate.is_file():
                self._reply(404, b"not found", "text/plain")
                return True
            kind = mimetypes.guess_type(candidate.name)[0] or "application/octet-stream"
            self._reply(200, candidate.read_bytes(), kind)
            return True

        def do_GET(self):
            if self._serve_static(urlsplit(self.path).path):
                return
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


class ApiHttpServer:
    """Threaded HTTP listener around one api object.

    With a webroot, GET requests outside the API prefixes serve static
    files from that directory, so a browser frontend can live on the same
    origin as the REST endpoints it calls.
    """

    def __init__(self, api, host: str = "127.0.0.1", port: int = 0,
                 webroot: str | None = None):
        root = Path(webroot).resolve() if webroot else None
        self.httpd = ThreadingHTTPServer((host, port), _make_handler(api, root))
        self.host = host
        self.port = self.httpd.server_address[1]
        self.url = f"http://{host}:{self.port}"
        self._thread: threading.Thread | None = None

    def start(self) -> "ApiHttpServer":
        self._thread = threading.Thread(
            target=self.httpd.serve_forever, name=f"http-{self.port}", daemon=True
        )
        self._thread.start()
        log.info("listening on %s", self.url)
        return self

    def serve_forever(self) -> None:
        log.info("listening on %s", self.url)
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
