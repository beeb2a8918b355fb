"""Typed clients for the wire protocol.

A :class:`BackendClient` wraps one endpoint with the three behaviors every
capability shares: bounded in-flight concurrency (a per-endpoint semaphore),
retries with exponential backoff for transient failures, and a persistent
response cache consulted before any upstream request. Generation responses
are deliberately uncached by default — candidate sampling is the point —
while everything else is cached.
"""

from __future__ import annotations

import base64
import io
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from PIL import Image, UnidentifiedImageError

from ..errors import BackendUnavailable, ProtocolError, ValidationError
from .cache import ResponseCache, cache_key
from .transport import HttpTransport, Transport


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.1
    factor: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValidationError("retry max_attempts must be >= 1")
        if self.base_backoff < 0 or self.factor < 1:
            raise ValidationError("retry backoff must be >= 0 with factor >= 1")

    def backoff_before(self, attempt: int) -> float:
        """Delay before retry ``attempt`` (attempt 0 is the initial try)."""
        return self.base_backoff * self.factor ** (attempt - 1)


@dataclass(frozen=True)
class BackendEndpoint:
    """Where a capability lives and how hard to lean on it.

    Credentials are referenced by environment-variable name only. ``model_id``
    labels the model behind the endpoint; it feeds cache keys and manifests.
    """

    base_url: str
    auth_token_ref: Optional[str] = None
    timeout: float = 30.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    model_id: str = ""

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValidationError("endpoint base_url is empty")
        if self.timeout <= 0:
            raise ValidationError("endpoint timeout must be > 0")
        if self.max_in_flight < 1:
            raise ValidationError("endpoint max_in_flight must be >= 1")


@dataclass(frozen=True)
class Embedding:
    values: tuple[float, ...]
    dim: int
    model_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.dim < 1 or len(self.values) != self.dim:
            raise ValidationError(
                f"embedding has {len(self.values)} values but declares dim {self.dim}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("embedding contains non-finite values")


def _check_png(png_bytes: bytes) -> tuple[int, int]:
    try:
        with Image.open(io.BytesIO(png_bytes)) as image:
            if image.format != "PNG":
                raise ValidationError(f"expected PNG image data, got {image.format}")
            return image.size
    except UnidentifiedImageError as exc:
        raise ValidationError(f"undecodable image payload: {exc}") from exc


@dataclass(frozen=True)
class GeneratedImage:
    png_bytes: bytes
    width: int
    height: int
    seed: int
    backend_id: str

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError("image dimensions must be >= 1")
        actual = _check_png(self.png_bytes)
        if actual != (self.width, self.height):
            raise ValidationError(
                f"PNG decodes to {actual}, expected {(self.width, self.height)}"
            )


@dataclass(frozen=True)
class JudgeVerdict:
    correct: bool


@dataclass(frozen=True)
class RewardScore:
    score: float


@dataclass(frozen=True)
class VqaProbability:
    probability: float


ScoreResult = Union[JudgeVerdict, RewardScore, VqaProbability]


def _b64(png_bytes: bytes) -> str:
    return base64.b64encode(png_bytes).decode("ascii")


def _image_bytes(image: Union[GeneratedImage, bytes]) -> bytes:
    if isinstance(image, GeneratedImage):
        return image.png_bytes
    _check_png(image)
    return image


class BackendClient:
    """One capability endpoint with caching, retries, and an in-flight ceiling.

    Safe to share across threads. The transport defaults to HTTP against the
    endpoint's base_url; tests and offline runs inject mock transports.
    """

    def __init__(
        self,
        endpoint: BackendEndpoint,
        transport: Optional[Transport] = None,
        cache: Optional[ResponseCache] = None,
        *,
        cache_generation: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.transport = transport or HttpTransport(
            endpoint.base_url,
            timeout=endpoint.timeout,
            auth_token_ref=endpoint.auth_token_ref,
        )
        self.cache = cache
        self.cache_generation = cache_generation
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(endpoint.max_in_flight)

    @property
    def backend_id(self) -> str:
        return self.endpoint.model_id or self.endpoint.base_url

    def _request(self, path: str, payload: dict, *, operation: str, cacheable: bool) -> dict:
        digest = None
        if cacheable and self.cache is not None:
            digest = cache_key(operation, payload, self.endpoint.model_id)
            hit = self.cache.get(digest)
            if hit is not None:
                return hit
        response = self._send_with_retry(path, payload)
        if digest is not None:
            self.cache.put(
                digest, response, operation=operation, model_id=self.endpoint.model_id
            )
        return response

    def _send_with_retry(self, path: str, payload: dict) -> dict:
        policy = self.endpoint.retry
        last: Optional[BackendUnavailable] = None
        for attempt in range(policy.max_attempts):
            if attempt:
                self._sleep(policy.backoff_before(attempt))
            try:
                with self._gate:
                    return self.transport.post(path, payload)
            except BackendUnavailable as exc:
                last = exc
        raise BackendUnavailable(
            f"{path} still failing after {policy.max_attempts} attempts: {last}"
        ) from last

    # Capabilities

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        if not text.strip():
            raise ValidationError("translate: text is empty")
        if source_lang == target_lang:
            raise ValidationError(
                f"translate: source and target language are both {source_lang!r}"
            )
        response = self._request(
            "/v1/translate",
            {"text": text, "source_lang": source_lang, "target_lang": target_lang},
            operation="translate",
            cacheable=True,
        )
        translated = response.get("text")
        if not isinstance(translated, str) or not translated:
            raise ProtocolError("translate: backend returned an empty translation")
        return translated

    def paraphrase(self, text: str, n: int) -> list[str]:
        if not text.strip():
            raise ValidationError("paraphrase: text is empty")
        if n < 1:
            raise ValidationError("paraphrase: n must be >= 1")
        response = self._request(
            "/v1/paraphrase",
            {"text": text, "n": n},
            operation="paraphrase",
            cacheable=True,
        )
        texts = response.get("texts")
        if (
            not isinstance(texts, list)
            or len(texts) != n
            or not all(isinstance(t, str) and t.strip() for t in texts)
        ):
            raise ProtocolError(f"paraphrase: expected {n} nonempty strings")
        return list(texts)

    def generate_image(
        self, prompt: str, seed: int, *, width: int, height: int
    ) -> GeneratedImage:
        if not prompt.strip():
            raise ValidationError("generate: prompt is empty")
        if width < 1 or height < 1:
            raise ValidationError("generate: width and height must be >= 1")
        response = self._request(
            "/v1/generate",
            {"prompt": prompt, "seed": seed, "width": width, "height": height},
            operation="generate",
            cacheable=self.cache_generation,
        )
        image_b64 = response.get("image_b64")
        if not isinstance(image_b64, str):
            raise ProtocolError("generate: response missing image_b64")
        try:
            png_bytes = base64.b64decode(image_b64, validate=True)
        except Exception as exc:
            raise ProtocolError(f"generate: invalid base64 image payload: {exc}") from exc
        try:
            return GeneratedImage(
                png_bytes=png_bytes,
                width=int(response.get("width", width)),
                height=int(response.get("height", height)),
                seed=seed,
                backend_id=self.backend_id,
            )
        except ValidationError as exc:
            raise ProtocolError(f"generate: {exc}") from exc

    def _embed(self, path: str, payload: dict, operation: str) -> Embedding:
        response = self._request(path, payload, operation=operation, cacheable=True)
        values = response.get("embedding")
        dim = response.get("dim")
        model_id = response.get("model_id", self.endpoint.model_id)
        if not isinstance(values, list) or not isinstance(dim, int):
            raise ProtocolError(f"{operation}: malformed embedding response")
        if len(values) != dim:
            raise ProtocolError(
                f"{operation}: backend declared dim {dim} but sent {len(values)} values"
            )
        try:
            return Embedding(values=tuple(values), dim=dim, model_id=str(model_id))
        except ValidationError as exc:
            raise ProtocolError(f"{operation}: {exc}") from exc

    def embed_text(self, text: str) -> Embedding:
        if not text.strip():
            raise ValidationError("embed_text: text is empty")
        return self._embed("/v1/embed/text", {"text": text}, "embed_text")

    def embed_image(self, image: Union[GeneratedImage, bytes]) -> Embedding:
        png_bytes = _image_bytes(image)  # validates before any network I/O
        return self._embed(
            "/v1/embed/image", {"image_b64": _b64(png_bytes)}, "embed_image"
        )

    def judge(
        self,
        prompt: str,
        image: Union[GeneratedImage, bytes],
        template_id: Optional[str] = None,
    ) -> JudgeVerdict:
        if not prompt.strip():
            raise ValidationError("judge: prompt is empty")
        payload: dict = {"prompt": prompt, "image_b64": _b64(_image_bytes(image))}
        if template_id is not None:
            payload["template_id"] = template_id
        response = self._request("/v1/judge", payload, operation="judge", cacheable=True)
        verdict = response.get("verdict")
        if verdict not in ("correct", "incorrect"):
            raise ProtocolError(f"judge: unparseable verdict {verdict!r}")
        return JudgeVerdict(correct=verdict == "correct")

    def reward(self, prompt: str, image: Union[GeneratedImage, bytes]) -> RewardScore:
        if not prompt.strip():
            raise ValidationError("reward: prompt is empty")
        response = self._request(
            "/v1/reward",
            {"prompt": prompt, "image_b64": _b64(_image_bytes(image))},
            operation="reward",
            cacheable=True,
        )
        score = response.get("score")
        if not isinstance(score, (int, float)) or not math.isfinite(score):
            raise ProtocolError(f"reward: non-finite score {score!r}")
        return RewardScore(score=float(score))

    def vqa(self, question: str, image: Union[GeneratedImage, bytes]) -> VqaProbability:
        if not question.strip():
            raise ValidationError("vqa: question is empty")
        response = self._request(
            "/v1/vqa",
            {"question": question, "image_b64": _b64(_image_bytes(image))},
            operation="vqa",
            cacheable=True,
        )
        probability = response.get("probability")
        if (
            not isinstance(probability, (int, float))
            or not math.isfinite(probability)
            or not 0.0 <= probability <= 1.0
        ):
            raise ProtocolError(f"vqa: probability {probability!r} outside [0, 1]")
        return VqaProbability(probability=float(probability))

    def score_image(
        self,
        kind: str,
        prompt_or_question: str,
        image: Union[GeneratedImage, bytes],
    ) -> ScoreResult:
        """Dispatch to the judge/reward/vqa capability named by ``kind``."""
        if kind == "judge":
            return self.judge(prompt_or_question, image)
        if kind == "reward":
            return self.reward(prompt_or_question, image)
        if kind == "vqa":
            return self.vqa(prompt_or_question, image)
        raise ValidationError(f"unknown score kind {kind!r}")
