"""Prompt rendering, variant-space arithmetic, and ablation constructors."""

from __future__ import annotations

import itertools
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmt2i.errors import PromptError
from pmt2i.prompt_core import (
    DEFAULT_LANGUAGES,
    LanguageCode,
    ParallelText,
    SourceText,
    VariantStrategy,
    count_variants,
    enumerate_variants,
    language,
    render_paraphrase,
    render_prompt,
    render_reduplication,
    render_single_language,
    variant_rank,
    variant_unrank,
)

from prompt_fixtures import RENDER_CASES

GOLDEN_DIR = Path(__file__).parent / "golden" / "prompts"


def build_parallel(record: dict) -> ParallelText:
    return ParallelText.from_mapping(
        SourceText(record["id"], record["text"]), record["translations"]
    )


def oracle_orders(n: int) -> list[tuple[int, ...]]:
    """All nonempty ordered subsets of range(n), sizes ascending, lex within size.

    Built directly from itertools, independent of the rank arithmetic.
    """
    return [
        perm
        for size in range(1, n + 1)
        for perm in itertools.permutations(range(n), size)
    ]


@pytest.mark.parametrize("name,kind,record,arg", RENDER_CASES)
def test_rendering_matches_goldens(name, kind, record, arg):
    golden = (GOLDEN_DIR / f"{name}.txt").read_bytes().decode("utf-8")
    if kind == "order":
        rendered = render_prompt(build_parallel(record), arg)
    elif kind == "reduplication":
        rendered = render_reduplication(SourceText(record["id"], record["text"]), arg)
    elif kind == "paraphrase":
        rendered = render_paraphrase(SourceText(record["id"], record["text"]), arg)
    else:
        rendered = render_single_language(build_parallel(record), arg)
    assert rendered == golden


class TestRenderPrompt:
    def test_order_preserved_and_english_first(self):
        parallel = build_parallel(
            {"id": "x", "text": "A red car.", "translations": {"de": "Ein rotes Auto.", "fr": "Une voiture rouge."}}
        )
        rendered = render_prompt(parallel, ["fr", "de"])
        lines = rendered.split("\n")
        assert lines[0] == "English: A red car."
        assert lines[1].startswith("French:")
        assert lines[2].startswith("German:")

    def test_no_trailing_newline(self):
        parallel = build_parallel(
            {"id": "x", "text": "A red car.", "translations": {"de": "Ein rotes Auto."}}
        )
        assert not render_prompt(parallel, ["de"]).endswith("\n")

    def test_unknown_language_rejected(self):
        parallel = build_parallel(
            {"id": "x", "text": "A red car.", "translations": {"de": "Ein rotes Auto."}}
        )
        with pytest.raises(PromptError):
            render_prompt(parallel, ["fr"])

    def test_duplicate_language_rejected(self):
        parallel = build_parallel(
            {"id": "x", "text": "A red car.", "translations": {"de": "Ein rotes Auto."}}
        )
        with pytest.raises(PromptError):
            render_prompt(parallel, ["de", "de"])

    def test_accepts_language_code_objects(self):
        parallel = build_parallel(
            {"id": "x", "text": "A red car.", "translations": {"de": "Ein rotes Auto."}}
        )
        assert render_prompt(parallel, [language("de")]) == render_prompt(parallel, ["de"])


class TestCountVariants:
    def test_six_languages_gives_1956(self):
        assert count_variants(6) == 1956

    def test_single_language(self):
        assert count_variants(1) == 1

    def test_three_languages(self):
        # Frozen from the brute-force oracle: 3 + 6 + 6 ordered subsets.
        assert count_variants(3) == 15

    @pytest.mark.parametrize("n", range(0, 11))
    def test_matches_brute_force_enumeration(self, n):
        assert count_variants(n) == len(oracle_orders(n))

    def test_rejects_negative(self):
        with pytest.raises(PromptError):
            count_variants(-1)

    def test_rejects_beyond_bound(self):
        with pytest.raises(PromptError):
            count_variants(17)


class TestRankBijection:
    DE_FR = (LanguageCode("de", "German"), LanguageCode("fr", "French"))

    def test_unrank_first_rank(self):
        assert [l.code for l in variant_unrank(0, self.DE_FR)] == ["de"]

    def test_unrank_last_rank(self):
        assert [l.code for l in variant_unrank(3, self.DE_FR)] == ["fr", "de"]

    def test_unrank_out_of_range(self):
        with pytest.raises(PromptError):
            variant_unrank(4, self.DE_FR)
        with pytest.raises(PromptError):
            variant_unrank(-1, self.DE_FR)

    @pytest.mark.parametrize("n", range(1, 5))
    def test_unrank_matches_oracle_order(self, n):
        languages = DEFAULT_LANGUAGES[:n]
        expected = oracle_orders(n)
        for rank, order_indices in enumerate(expected):
            unranked = variant_unrank(rank, languages)
            assert tuple(languages.index(l) for l in unranked) == order_indices

    @pytest.mark.parametrize("n", range(1, 5))
    def test_rank_inverts_unrank(self, n):
        languages = DEFAULT_LANGUAGES[:n]
        seen = set()
        for rank in range(count_variants(n)):
            order = variant_unrank(rank, languages)
            seen.add(tuple(l.code for l in order))
            assert variant_rank(order, languages) == rank
        assert len(seen) == count_variants(n)

    def test_rank_rejects_foreign_language(self):
        with pytest.raises(PromptError):
            variant_rank((language("zh"),), self.DE_FR)


class TestEnumerateVariants:
    PARALLEL = ParallelText.from_mapping(
        SourceText("x", "A red car."),
        {"de": "Ein rotes Auto.", "fr": "Une voiture rouge."},
    )

    def test_all_yields_every_rank(self):
        variants = enumerate_variants(self.PARALLEL, VariantStrategy.all())
        assert [v.rank for v in variants] == [0, 1, 2, 3]
        assert len({v.rendered for v in variants}) == 4

    def test_first_k_clamps(self):
        variants = enumerate_variants(self.PARALLEL, VariantStrategy.first(10))
        assert [v.rank for v in variants] == [0, 1, 2, 3]

    def test_sample_is_deterministic(self):
        a = enumerate_variants(self.PARALLEL, VariantStrategy.sample(2, seed=7))
        b = enumerate_variants(self.PARALLEL, VariantStrategy.sample(2, seed=7))
        assert a == b
        assert sorted(v.rank for v in a) == [v.rank for v in a]  # ascending

    def test_sample_distinct_ranks(self):
        variants = enumerate_variants(self.PARALLEL, VariantStrategy.sample(4, seed=3))
        assert len({v.rank for v in variants}) == 4

    def test_empty_translations_all_is_empty(self):
        bare = ParallelText(SourceText("x", "A red car."), ())
        assert enumerate_variants(bare, VariantStrategy.all()) == []

    def test_empty_translations_other_strategies_fail(self):
        bare = ParallelText(SourceText("x", "A red car."), ())
        with pytest.raises(PromptError):
            enumerate_variants(bare, VariantStrategy.first(1))
        with pytest.raises(PromptError):
            enumerate_variants(bare, VariantStrategy.sample(1, seed=0))

    def test_sample_larger_than_space_fails(self):
        with pytest.raises(PromptError):
            enumerate_variants(self.PARALLEL, VariantStrategy.sample(5, seed=0))


class TestAblationRenderers:
    def test_reduplication_single(self):
        assert (
            render_reduplication(SourceText("d", "A dog."), 1)
            == "English: A dog.\nEnglish: A dog."
        )

    def test_reduplication_line_count(self):
        rendered = render_reduplication(SourceText("d", "A dog."), 3)
        assert rendered.split("\n") == ["English: A dog."] * 4

    def test_reduplication_rejects_zero(self):
        with pytest.raises(PromptError):
            render_reduplication(SourceText("d", "A dog."), 0)

    def test_empty_source_rejected(self):
        with pytest.raises(PromptError):
            SourceText("d", "   ")

    def test_paraphrase_lines_in_order(self):
        rendered = render_paraphrase(
            SourceText("d", "A dog."), ["A canine.", "One dog."]
        )
        assert rendered == "English: A dog.\nEnglish: A canine.\nEnglish: One dog."

    def test_paraphrase_degenerate_is_baseline(self):
        assert render_paraphrase(SourceText("d", "A dog."), []) == "English: A dog."

    def test_paraphrase_rejects_empty_entry(self):
        with pytest.raises(PromptError):
            render_paraphrase(SourceText("d", "A dog."), ["ok", " "])


class TestParallelTextInvariants:
    def test_rejects_english_translation(self):
        with pytest.raises(PromptError):
            ParallelText(
                SourceText("x", "hi"), ((LanguageCode("en", "English"), "hi"),)
            )

    def test_rejects_duplicate_codes(self):
        with pytest.raises(PromptError):
            ParallelText(
                SourceText("x", "hi"),
                ((language("de"), "a"), (language("de"), "b")),
            )

    def test_rejects_empty_translation_text(self):
        with pytest.raises(PromptError):
            ParallelText(SourceText("x", "hi"), ((language("de"), " "),))


class TestStrategyParsing:
    @pytest.mark.parametrize(
        "spec,expected",
        [
            ("all", VariantStrategy.all()),
            ("first:4", VariantStrategy.first(4)),
            ("sample:6:13", VariantStrategy.sample(6, 13)),
        ],
    )
    def test_parse_round_trip(self, spec, expected):
        parsed = VariantStrategy.parse(spec)
        assert parsed == expected
        assert parsed.spec_string() == spec

    @pytest.mark.parametrize("spec", ["", "first", "sample:3", "first:x", "best:2"])
    def test_parse_rejects_garbage(self, spec):
        with pytest.raises(PromptError):
            VariantStrategy.parse(spec)


PARK_PARALLEL = ParallelText.from_mapping(
    SourceText("park", "Two dogs play in the park."),
    {
        "ru": "Две собаки играют в парке.",
        "es": "Dos perros juegan en el parque.",
        "de": "Zwei Hunde spielen im Park.",
        "fr": "Deux chiens jouent dans le parc.",
        "zh": "两只狗在公园里玩耍。",
        "it": "Due cani giocano nel parco.",
    },
)


@given(rank=st.integers(min_value=0, max_value=1955))
@settings(max_examples=200, deadline=None)
def test_rendered_shape_property(rank):
    """First line is English and line count is 1 + |order| for any rank."""
    order = variant_unrank(rank, PARK_PARALLEL.languages)
    rendered = render_prompt(PARK_PARALLEL, order)
    lines = rendered.split("\n")
    assert lines[0].startswith("English: ")
    assert len(lines) == 1 + len(order)


@given(
    pair=st.tuples(
        st.integers(min_value=0, max_value=1955),
        st.integers(min_value=0, max_value=1955),
    )
)
@settings(max_examples=200, deadline=None)
def test_render_injective_over_orders(pair):
    """Distinct orders render to distinct prompts when translations differ."""
    a, b = pair
    ra = render_prompt(PARK_PARALLEL, variant_unrank(a, PARK_PARALLEL.languages))
    rb = render_prompt(PARK_PARALLEL, variant_unrank(b, PARK_PARALLEL.languages))
    assert (ra == rb) == (a == b)
