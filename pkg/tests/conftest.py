"""Shared fixtures.

The backend under test defaults to the in-process deterministic mock. Setting
PMT2I_BACKEND_URL points the same contract tests at any HTTP server that
claims to implement the wire protocol (protocol conformance runs).
"""

from __future__ import annotations

import os

import pytest

from pmt2i.backends import MockBackend
from pmt2i.backends.transport import HttpTransport


@pytest.fixture
def backend_transport():
    url = os.environ.get("PMT2I_BACKEND_URL")
    if url:
        transport = HttpTransport(url)
        yield transport
        transport.close()
    else:
        yield MockBackend()
