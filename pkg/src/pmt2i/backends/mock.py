"""Deterministic in-process backends implementing the wire protocol.

Every route is a pure function of the canonicalized request payload, so
identical requests always return identical bodies — the property the cache,
resume, and reproducibility tests lean on. Route contracts:

- translate:  returns "«<target code>» " + text
- paraphrase: returns ["<text> ¶1", ..., "<text> ¶n"]
- generate:   pseudorandom PNG derived from the payload digest; a prompt
              containing "XREFUSE" is refused
- embed/*:    digest-derived vector, unless a planted vector matches
- judge:      "incorrect" when the prompt contains "XFAIL", else "correct"
- reward:     digest-derived score in [-2, 2]
- vqa:        digest-derived probability in [0, 1], unless overridden

Counters record upstream traffic per route; ``peak_in_flight`` records the
concurrency the backend actually observed (pass ``handler_delay`` to widen
the observation window).
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
import time
from collections import Counter
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from ..errors import GenerationRefused, ValidationError
from .cache import canonical_json

ROUTES = (
    "/v1/translate",
    "/v1/paraphrase",
    "/v1/generate",
    "/v1/embed/text",
    "/v1/embed/image",
    "/v1/judge",
    "/v1/reward",
    "/v1/vqa",
)

MOCK_MODEL_IDS = {
    "/v1/translate": "mock/translate-v1",
    "/v1/paraphrase": "mock/paraphrase-v1",
    "/v1/generate": "mock/generate-v1",
    "/v1/embed/text": "mock/dual-encoder-v1",
    "/v1/embed/image": "mock/dual-encoder-v1",
    "/v1/judge": "mock/judge-v1",
    "/v1/reward": "mock/reward-v1",
    "/v1/vqa": "mock/vqa-v1",
}


def _payload_digest(payload: dict) -> bytes:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).digest()


def _unit_fraction(digest: bytes, *, offset: int = 0) -> float:
    """Map 8 digest bytes to a float in [0, 1)."""
    chunk = digest[offset : offset + 8]
    return int.from_bytes(chunk, "big") / 2**64


def _require(payload: dict, field: str) -> object:
    if field not in payload:
        raise ValidationError(f"missing field {field!r}")
    return payload[field]


def _require_text(payload: dict, field: str) -> str:
    value = _require(payload, field)
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"field {field!r} must be a nonempty string")
    return value


class MockBackend:
    """One instance serves all routes; usable directly as a Transport."""

    def __init__(
        self,
        *,
        embed_dim: int = 8,
        handler_delay: float = 0.0,
        planted_text_embeddings: Mapping[str, Sequence[float]] | None = None,
        planted_image_embeddings: Mapping[str, Sequence[float]] | None = None,
        vqa_overrides: Mapping[str, float] | None = None,
    ):
        self.embed_dim = embed_dim
        self.handler_delay = handler_delay
        self.planted_text_embeddings = dict(planted_text_embeddings or {})
        self.planted_image_embeddings = dict(planted_image_embeddings or {})
        self.vqa_overrides = dict(vqa_overrides or {})
        self.calls: Counter[str] = Counter()
        self.peak_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()
        self._handlers = {
            "/v1/translate": self._translate,
            "/v1/paraphrase": self._paraphrase,
            "/v1/generate": self._generate,
            "/v1/embed/text": self._embed_text,
            "/v1/embed/image": self._embed_image,
            "/v1/judge": self._judge,
            "/v1/reward": self._reward,
            "/v1/vqa": self._vqa,
        }

    @property
    def routes(self) -> tuple[str, ...]:
        return ROUTES

    def post(self, path: str, payload: dict) -> dict:
        handler = self._handlers.get(path)
        if handler is None:
            raise ValidationError(f"unknown path {path!r}")
        with self._lock:
            self.calls[path] += 1
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
        try:
            if self.handler_delay:
                time.sleep(self.handler_delay)
            return handler(payload)
        finally:
            with self._lock:
                self._in_flight -= 1

    # Route handlers

    def _translate(self, payload: dict) -> dict:
        text = _require_text(payload, "text")
        source = _require_text(payload, "source_lang")
        target = _require_text(payload, "target_lang")
        if source == target:
            raise ValidationError("source_lang equals target_lang")
        return {"text": f"«{target}» {text}"}

    def _paraphrase(self, payload: dict) -> dict:
        text = _require_text(payload, "text")
        n = _require(payload, "n")
        if not isinstance(n, int) or n < 1:
            raise ValidationError("n must be a positive integer")
        return {"texts": [f"{text} ¶{i}" for i in range(1, n + 1)]}

    def _generate(self, payload: dict) -> dict:
        prompt = _require_text(payload, "prompt")
        width = int(_require(payload, "width"))
        height = int(_require(payload, "height"))
        if width < 1 or height < 1:
            raise ValidationError("width and height must be >= 1")
        _require(payload, "seed")
        if "XREFUSE" in prompt:
            raise GenerationRefused("mock backend refuses prompts containing XREFUSE")
        digest = _payload_digest(payload)
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        buffer = io.BytesIO()
        Image.fromarray(pixels, mode="RGB").save(buffer, format="PNG")
        return {
            "image_b64": base64.b64encode(buffer.getvalue()).decode("ascii"),
            "width": width,
            "height": height,
        }

    def _vector_from_digest(self, digest: bytes) -> list[float]:
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        return [float(v) for v in rng.uniform(-1.0, 1.0, self.embed_dim)]

    def _embed_response(self, values: Sequence[float]) -> dict:
        return {
            "embedding": [float(v) for v in values],
            "dim": len(values),
            "model_id": MOCK_MODEL_IDS["/v1/embed/text"],
        }

    def _embed_text(self, payload: dict) -> dict:
        text = _require_text(payload, "text")
        planted = self.planted_text_embeddings.get(text)
        if planted is not None:
            return self._embed_response(planted)
        return self._embed_response(self._vector_from_digest(_payload_digest(payload)))

    def _embed_image(self, payload: dict) -> dict:
        image_b64 = _require_text(payload, "image_b64")
        try:
            png_bytes = base64.b64decode(image_b64, validate=True)
        except Exception as exc:
            raise ValidationError(f"image_b64 is not valid base64: {exc}") from exc
        planted = self.planted_image_embeddings.get(
            hashlib.sha256(png_bytes).hexdigest()
        )
        if planted is not None:
            return self._embed_response(planted)
        return self._embed_response(self._vector_from_digest(_payload_digest(payload)))

    def _judge(self, payload: dict) -> dict:
        prompt = _require_text(payload, "prompt")
        _require_text(payload, "image_b64")
        verdict = "incorrect" if "XFAIL" in prompt else "correct"
        return {"verdict": verdict}

    def _reward(self, payload: dict) -> dict:
        _require_text(payload, "prompt")
        _require_text(payload, "image_b64")
        score = _unit_fraction(_payload_digest(payload)) * 4.0 - 2.0
        return {"score": score}

    def _vqa(self, payload: dict) -> dict:
        question = _require_text(payload, "question")
        _require_text(payload, "image_b64")
        override = self.vqa_overrides.get(question)
        if override is not None:
            return {"probability": override}
        return {"probability": _unit_fraction(_payload_digest(payload))}
