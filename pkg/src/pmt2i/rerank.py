"""Scoring candidate images against the source caption and picking the best.

Scores are raw cosine similarities between the caption embedding and each
candidate-image embedding; selection is the argmax with ties broken to the
lowest index. The x100 presentation convention belongs to report formatting,
never to the scores themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .backends.client import BackendClient, Embedding, GeneratedImage
from .errors import ValidationError


@dataclass(frozen=True)
class ScoredCandidate:
    sample_id: str
    label: str
    seed: int
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValidationError(
                f"candidate ({self.sample_id}, {self.label}, {self.seed}) "
                f"has non-finite score {self.score!r}"
            )


@dataclass(frozen=True)
class Selection:
    scores: tuple[ScoredCandidate, ...]
    chosen_index: int
    model_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", tuple(self.scores))
        if not 0 <= self.chosen_index < len(self.scores):
            raise ValidationError(
                f"chosen index {self.chosen_index} outside [0, {len(self.scores)})"
            )
        best = max(candidate.score for candidate in self.scores)
        if self.scores[self.chosen_index].score != best:
            raise ValidationError("chosen candidate does not carry the maximum score")

    @property
    def chosen(self) -> ScoredCandidate:
        return self.scores[self.chosen_index]


def cosine(u: Union[Embedding, Sequence[float]], v: Union[Embedding, Sequence[float]]) -> float:
    """Cosine similarity, clamped to [-1, 1] against floating-point overshoot."""
    a = np.asarray(u.values if isinstance(u, Embedding) else u, dtype=np.float64)
    b = np.asarray(v.values if isinstance(v, Embedding) else v, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine undefined for a zero-norm vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


def select_best(scores: Sequence[float]) -> int:
    """Index of the maximum score; ties break to the lowest index."""
    if len(scores) == 0:
        raise ValidationError("cannot select from an empty score list")
    best_index = 0
    best = scores[0]
    for index, score in enumerate(scores):
        if not math.isfinite(score):
            raise ValidationError(f"non-finite score {score!r} at index {index}")
        if score > best:
            best = score
            best_index = index
    return best_index


def best_of_k_curve(scores: Sequence[float]) -> list[float]:
    """Element k-1 is the best score among the first k candidates."""
    if len(scores) == 0:
        raise ValidationError("cannot build a best-of-k curve from no scores")
    curve: list[float] = []
    best = -math.inf
    for score in scores:
        best = max(best, score)
        curve.append(best)
    return curve


def select_from_embeddings(
    text_embedding: Embedding,
    image_embeddings: Sequence[Embedding],
    *,
    candidates: Optional[Sequence[tuple[str, str, int]]] = None,
    model_id: Optional[str] = None,
) -> Selection:
    """Score image embeddings against a text embedding and pick the argmax.

    ``candidates`` supplies (sample_id, label, seed) references; anonymous
    indices are used when omitted.
    """
    if len(image_embeddings) == 0:
        raise ValidationError("no image embeddings to select from")
    if candidates is None:
        candidates = [("", str(i), 0) for i in range(len(image_embeddings))]
    if len(candidates) != len(image_embeddings):
        raise ValidationError("candidate references do not match embeddings")
    scores = [cosine(text_embedding, image) for image in image_embeddings]
    chosen = select_best(scores)
    scored = tuple(
        ScoredCandidate(sample_id=ref[0], label=ref[1], seed=ref[2], score=score)
        for ref, score in zip(candidates, scores)
    )
    return Selection(
        scores=scored,
        chosen_index=chosen,
        model_id=model_id if model_id is not None else text_embedding.model_id,
    )


def rerank_candidates(
    text: str,
    candidates: Sequence[GeneratedImage],
    embed_client: BackendClient,
    *,
    references: Optional[Sequence[tuple[str, str, int]]] = None,
) -> Selection:
    """Embed the caption once and every candidate image, then select.

    The caption is the ORIGINAL English description; multilingual prompts are
    never what candidates are scored against.
    """
    if len(candidates) == 0:
        raise ValidationError("no candidates to rerank")
    text_embedding = embed_client.embed_text(text)
    image_embeddings = [embed_client.embed_image(image) for image in candidates]
    return select_from_embeddings(
        text_embedding,
        image_embeddings,
        candidates=references,
        model_id=text_embedding.model_id,
    )
