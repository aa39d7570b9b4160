"""Threaded HTTP front end for the service core.

Endpoints: POST /advisories, GET /advisories, DELETE /advisories/{id},
GET /fleet, GET /traffic, GET /stream (newline-delimited JSON push:
snapshot first, then live events). CORS is wide open so the browser
console can be served from anywhere.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .store import ValidationError

__all__ = ["serve_http", "ServiceHTTPServer"]

logger = logging.getLogger(__name__)

_ADVISORY_ID_PATH = re.compile(r"^/advisories/(\d+)$")
STREAM_POLL_S = 0.5


class ServiceHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, core):
        self.core = core
        super().__init__(address, _Handler)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def core(self):
        return self.server.core

    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    # -- plumbing -------------------------------------------------------------

    def _send_json(self, status: int, body):
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _read_json_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return None

    # -- methods ---------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        if self.path != "/advisories":
            self._send_json(404, {"error": "not found"})
            return
        body = self._read_json_body()
        if body is None:
            self._send_json(400, {"error": "body is not valid JSON"})
            return
        try:
            record = self.core.create_advisory(
                segment_id=body.get("segment_id"),
                speed_mps=body.get("speed_mps"),
                duration_s=body.get("duration_s"),
                cause=body.get("cause", "none"),
            )
        except ValidationError as exc:
            self._send_json(422, {"error": str(exc), "field": exc.field})
            return
        self._send_json(201, record.to_json())

    def do_DELETE(self):
        match = _ADVISORY_ID_PATH.match(self.path)
        if match is None:
            self._send_json(404, {"error": "not found"})
            return
        record = self.core.cancel_advisory(int(match.group(1)))
        if record is None:
            self._send_json(404, {"error": "no such advisory"})
            return
        self._send_json(200, record.to_json())

    def do_GET(self):
        if self.path == "/advisories":
            self._send_json(200, {"advisories": self.core.advisories_json()})
        elif self.path == "/fleet":
            self._send_json(200, {"vehicles": self.core.fleet_json()})
        elif self.path == "/traffic":
            self._send_json(200, self.core.feed_json())
        elif self.path.split("?")[0] == "/stream":
            self._stream()
        elif self.path == "/healthz":
            self._send_json(200, {"ok": True})
        else:
            self._send_json(404, {"error": "not found"})

    def _write_chunk(self, data: bytes):
        self.wfile.write(f"{len(data):X}\r\n".encode() + data + b"\r\n")
        self.wfile.flush()

    def _stream(self):
        sub = self.core.open_stream()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Transfer-Encoding", "chunked")
            self._cors()
            self.end_headers()
            while sub.alive:
                event = sub.get(timeout=STREAM_POLL_S)
                if event is None:
                    continue
                self._write_chunk((json.dumps(event) + "\n").encode())
            self.wfile.write(b"0\r\n\r\n")
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.close_connection = True
            sub.close()


def serve_http(core, host="127.0.0.1", port=8080) -> ServiceHTTPServer:
    """Start the HTTP server on a daemon thread; returns the server handle."""
    server = ServiceHTTPServer((host, port), core)
    thread = threading.Thread(target=server.serve_forever, name="service-http", daemon=True)
    thread.start()
    return server
