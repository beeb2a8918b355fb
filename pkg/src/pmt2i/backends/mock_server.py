"""Wire-protocol HTTP server backed by the deterministic mocks.

Powers ``pmt2i serve-mock`` and integration tests that want real sockets in
front of the mock contracts. Errors follow the protocol shape:
``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from ..errors import GenerationRefused, Pmt2iError, ValidationError
from .mock import MockBackend


class _MockRequestHandler(BaseHTTPRequestHandler):
    backend: MockBackend  # assigned by the server factory

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_body(self, status: int, code: str, message: str) -> None:
        self._send(status, {"error": {"code": code, "message": message}})

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        if self.path not in self.backend.routes:
            self._send_error_body(404, "not_found", f"no route {self.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(payload, dict):
                raise ValidationError("request body must be a JSON object")
        except (ValueError, ValidationError) as exc:
            self._send_error_body(400, "bad_request", str(exc))
            return
        try:
            response = self.backend.post(self.path, payload)
        except GenerationRefused as exc:
            self._send_error_body(400, "refused", str(exc))
            return
        except ValidationError as exc:
            self._send_error_body(400, "bad_request", str(exc))
            return
        except Pmt2iError as exc:
            self._send_error_body(500, "internal", str(exc))
            return
        self._send(200, response)


class MockBackendServer:
    """Threaded HTTP server over a MockBackend; context-manager friendly."""

    def __init__(
        self,
        backend: Optional[MockBackend] = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.backend = backend or MockBackend()
        handler = type(
            "BoundMockHandler", (_MockRequestHandler,), {"backend": self.backend}
        )
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockBackendServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def __enter__(self) -> "MockBackendServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
