"""Wire-protocol backends: typed clients, caching, retries, and deterministic mocks."""

from .cache import ResponseCache, cache_key, canonical_json
from .client import (
    BackendClient,
    BackendEndpoint,
    Embedding,
    GeneratedImage,
    JudgeVerdict,
    RetryPolicy,
    RewardScore,
    VqaProbability,
)
from .mock import MockBackend
from .mock_server import MockBackendServer
from .transport import CountingTransport, FailingTransport, HttpTransport, Transport

__all__ = [
    "BackendClient",
    "BackendEndpoint",
    "CountingTransport",
    "Embedding",
    "FailingTransport",
    "GeneratedImage",
    "HttpTransport",
    "JudgeVerdict",
    "MockBackend",
    "MockBackendServer",
    "ResponseCache",
    "RetryPolicy",
    "RewardScore",
    "Transport",
    "VqaProbability",
    "cache_key",
    "canonical_json",
]
