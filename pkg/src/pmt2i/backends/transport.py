"""Transports carry one JSON request to a backend and return the response body.

``HttpTransport`` speaks the wire protocol over HTTP. The wrapper transports
compose over any inner transport (mock or HTTP alike); they exist so client
behavior — cache hit counts, in-flight ceilings, retry budgets — can be
observed and provoked from the outside.
"""

from __future__ import annotations

import os
import threading
from collections import Counter
from typing import Protocol

import httpx

from ..errors import BackendUnavailable, GenerationRefused, ProtocolError


class Transport(Protocol):
    def post(self, path: str, payload: dict) -> dict: ...


def _error_from_response(status: int, body: object) -> Exception:
    code = "unknown"
    message = ""
    if isinstance(body, dict):
        error = body.get("error")
        if isinstance(error, dict):
            code = str(error.get("code", code))
            message = str(error.get("message", ""))
    detail = f"{code}: {message}" if message else code
    if status == 429 or status >= 500:
        return BackendUnavailable(f"backend busy or failing (HTTP {status}, {detail})")
    if code == "refused":
        return GenerationRefused(message or "backend refused the request")
    return ProtocolError(f"backend rejected the request (HTTP {status}, {detail})")


class HttpTransport:
    """POSTs JSON bodies to ``base_url`` with an optional bearer credential.

    The credential is resolved from the environment variable named by
    ``auth_token_ref`` at request time; it never lives in configuration.
    """

    def __init__(
        self,
        base_url: str,
        *,
        timeout: float = 30.0,
        auth_token_ref: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.auth_token_ref = auth_token_ref
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def post(self, path: str, payload: dict) -> dict:
        headers = {}
        if self.auth_token_ref:
            token = os.environ.get(self.auth_token_ref)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        try:
            response = self._client.post(path, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"POST {path} failed: {exc}") from exc
        if response.status_code >= 400:
            try:
                body = response.json()
            except ValueError:
                body = None
            raise _error_from_response(response.status_code, body)
        try:
            return response.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON response from {path}") from exc

    def close(self) -> None:
        self._client.close()


class CountingTransport:
    """Counts upstream posts per path and tracks peak in-flight concurrency."""

    def __init__(self, inner: Transport):
        self.inner = inner
        self.calls: Counter[str] = Counter()
        self.peak_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def post(self, path: str, payload: dict) -> dict:
        with self._lock:
            self.calls[path] += 1
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            return self.inner.post(path, payload)
        finally:
            with self._lock:
                self._in_flight -= 1

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())


class FailingTransport:
    """Raises a transient failure for the first ``failures`` posts, then delegates."""

    def __init__(self, inner: Transport, failures: int):
        self.inner = inner
        self.remaining = failures
        self._lock = threading.Lock()

    def post(self, path: str, payload: dict) -> dict:
        with self._lock:
            if self.remaining > 0:
                self.remaining -= 1
                raise BackendUnavailable(f"injected transient failure for {path}")
        return self.inner.post(path, payload)
