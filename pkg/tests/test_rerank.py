"""Cosine scoring, argmax selection, and best-of-k behavior."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pmt2i.backends import BackendClient, BackendEndpoint, Embedding, MockBackend
from pmt2i.errors import ValidationError
from pmt2i.rerank import (
    best_of_k_curve,
    cosine,
    rerank_candidates,
    select_best,
    select_from_embeddings,
)


def fsum_cosine(u, v):
    """Reference cosine via compensated summation, independent of numpy."""
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    return dot / (nu * nv)


class TestCosine:
    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_positive_scaling(self):
        assert cosine([2.0, 0.0], [1.0, 0.0]) == 1.0

    def test_analytic_half_sqrt2(self):
        assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(
            math.sqrt(2) / 2, abs=1e-9
        )

    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.normal(size=rng.integers(2, 64))
            assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            assert cosine(u, v) == cosine(v, u)
            assert -1.0 <= cosine(u, v) <= 1.0

    def test_matches_fsum_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            dim = int(rng.integers(2, 128))
            u = rng.normal(size=dim)
            v = rng.normal(size=dim)
            assert cosine(u, v) == pytest.approx(fsum_cosine(u, v), abs=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_norm_rejected(self):
        with pytest.raises(ValidationError):
            cosine([0.0, 0.0], [1.0, 0.0])


class TestSelectBest:
    def test_plain_argmax(self):
        assert select_best([0.1, 0.9, 0.3]) == 1

    def test_tie_breaks_low(self):
        assert select_best([0.5, 0.5]) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            select_best([])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            select_best([0.1, float("nan")])

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            scores = list(rng.normal(size=int(rng.integers(1, 17))))
            expected = 0
            for i in range(len(scores)):  # oracle: literal scan
                if scores[i] > scores[expected]:
                    expected = i
            assert select_best(scores) == expected


class TestBestOfK:
    def test_example_curve(self):
        assert best_of_k_curve([0.2, 0.5, 0.4]) == [0.2, 0.5, 0.5]

    def test_constant_stays_constant(self):
        assert best_of_k_curve([0.3, 0.3, 0.3]) == [0.3, 0.3, 0.3]

    def test_sorted_is_identity(self):
        scores = [0.1, 0.2, 0.5, 0.9]
        assert best_of_k_curve(scores) == scores

    def test_monotone_and_prefix_max(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            scores = list(rng.normal(size=int(rng.integers(1, 20))))
            curve = best_of_k_curve(scores)
            for k in range(1, len(scores) + 1):
                assert curve[k - 1] == max(scores[:k])
            assert all(b >= a for a, b in zip(curve, curve[1:]))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            best_of_k_curve([])


def embedding(values):
    return Embedding(values=tuple(values), dim=len(values), model_id="test")


class TestSelectFromEmbeddings:
    def test_matches_argmax_oracle_on_random_sets(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            dim = int(rng.integers(2, 64))
            count = int(rng.integers(1, 17))
            text = rng.normal(size=dim)
            images = [rng.normal(size=dim) for _ in range(count)]
            selection = select_from_embeddings(
                embedding(text), [embedding(v) for v in images]
            )
            oracle_scores = [fsum_cosine(text, v) for v in images]
            oracle = max(range(count), key=lambda i: (oracle_scores[i], -i))
            assert selection.chosen_index == oracle

    def test_single_candidate(self):
        selection = select_from_embeddings(
            embedding([1.0, 0.0]), [embedding([-1.0, 0.0])]
        )
        assert selection.chosen_index == 0

    def test_scale_invariance(self):
        rng = np.random.default_rng(6)
        text = embedding(rng.normal(size=16))
        images = [rng.normal(size=16) for _ in range(6)]
        base = select_from_embeddings(text, [embedding(v) for v in images])
        for _ in range(20):
            scales = rng.uniform(0.01, 100.0, size=len(images))
            scaled = [embedding(v * s) for v, s in zip(images, scales)]
            assert select_from_embeddings(text, scaled).chosen_index == base.chosen_index

    def test_permutation_maps_chosen_index(self):
        rng = np.random.default_rng(7)
        text = rng.normal(size=8)
        images = [rng.normal(size=8) for _ in range(5)]
        base = select_from_embeddings(
            embedding(text), [embedding(v) for v in images]
        )
        perm = list(rng.permutation(len(images)))
        permuted = select_from_embeddings(
            embedding(text), [embedding(images[i]) for i in perm]
        )
        assert perm[permuted.chosen_index] == base.chosen_index
        assert [c.score for c in permuted.scores] == [
            base.scores[i].score for i in perm
        ]

    def test_selected_score_dominates(self):
        rng = np.random.default_rng(8)
        text = embedding(rng.normal(size=12))
        images = [embedding(rng.normal(size=12)) for _ in range(9)]
        selection = select_from_embeddings(text, images)
        assert all(selection.chosen.score >= c.score for c in selection.scores)


class TestRerankCandidates:
    def _client(self, backend):
        endpoint = BackendEndpoint(base_url="mock://embed", model_id="mock/dual-encoder-v1")
        return BackendClient(endpoint, transport=backend)

    def test_planted_best_candidate_wins(self):
        backend = MockBackend()
        client = self._client(backend)
        images = [
            client.generate_image("a cat", seed, width=8, height=8) for seed in range(4)
        ]
        import hashlib

        text_vector = [1.0, 0.0, 0.0]
        planted_images = {}
        for index, image in enumerate(images):
            digest = hashlib.sha256(image.png_bytes).hexdigest()
            angle = 0.1 if index == 2 else 1.2  # candidate 2 nearly parallel
            planted_images[digest] = [math.cos(angle), math.sin(angle), 0.0]
        planted = MockBackend(
            planted_text_embeddings={"a cat": text_vector},
            planted_image_embeddings=planted_images,
        )
        selection = rerank_candidates("a cat", images, self._client(planted))
        assert selection.chosen_index == 2

    def test_single_candidate_chosen_regardless(self):
        backend = MockBackend()
        client = self._client(backend)
        image = client.generate_image("a cat", 1, width=8, height=8)
        selection = rerank_candidates("a cat", [image], client)
        assert selection.chosen_index == 0

    def test_one_text_embed_call_per_rerank(self, tmp_path):
        from pmt2i.backends import CountingTransport, ResponseCache

        backend = MockBackend()
        counting = CountingTransport(backend)
        endpoint = BackendEndpoint(base_url="mock://embed", model_id="m")
        client = BackendClient(
            endpoint, transport=counting, cache=ResponseCache(tmp_path / "c")
        )
        images = [
            client.generate_image("a cat", seed, width=8, height=8) for seed in range(3)
        ]
        rerank_candidates("a cat", images, client)
        assert counting.calls["/v1/embed/text"] == 1
        assert counting.calls["/v1/embed/image"] == 3

    def test_empty_candidates_rejected(self):
        client = self._client(MockBackend())
        with pytest.raises(ValidationError):
            rerank_candidates("a cat", [], client)
