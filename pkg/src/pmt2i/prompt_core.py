"""Parallel multilingual prompt construction and its variant space.

A prompt is the original English caption followed by one line per translation
language, every line shaped ``<display name>: <text>`` and joined by single
newlines. The variant space is the set of all nonempty ordered subsets of the
configured translation languages; it is indexed by a stable bijection
(subset size ascending, then lexicographic by language configuration index),
so variants can be counted, ranked, unranked, and sampled without
materializing the whole space.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

from .errors import PromptError

_CODE_RE = re.compile(r"^[a-z]{2}$")

ENGLISH_DISPLAY = "English"

# Variant counts grow as sum of n!/(n-i)!; 16 languages is ~5.6e13 variants,
# far beyond anything enumerable, and a safe ceiling for exact integer ranks.
MAX_LANGUAGES = 16


@dataclass(frozen=True)
class LanguageCode:
    """A prompt language: ISO-639-1 code plus the English exonym used in the template."""

    code: str
    display_name: str

    def __post_init__(self) -> None:
        if not _CODE_RE.match(self.code):
            raise PromptError(
                f"language code must be two lowercase ASCII letters, got {self.code!r}"
            )
        if not self.display_name.strip():
            raise PromptError(f"display name for language {self.code!r} is empty")


ENGLISH = LanguageCode("en", ENGLISH_DISPLAY)

# English exonyms for the codes this package knows out of the box. Anything
# else can be supplied explicitly as a LanguageCode.
KNOWN_DISPLAY_NAMES: Mapping[str, str] = {
    "en": "English",
    "ru": "Russian",
    "es": "Spanish",
    "de": "German",
    "fr": "French",
    "zh": "Chinese",
    "it": "Italian",
    "pt": "Portuguese",
    "ja": "Japanese",
    "ko": "Korean",
    "ar": "Arabic",
    "nl": "Dutch",
    "pl": "Polish",
    "tr": "Turkish",
    "hi": "Hindi",
}


def language(code: str) -> LanguageCode:
    """Resolve a bare ISO code against the built-in display-name table."""
    display = KNOWN_DISPLAY_NAMES.get(code)
    if display is None:
        raise PromptError(
            f"unknown language code {code!r}; supply a LanguageCode with a display name"
        )
    return LanguageCode(code, display)


# The six rich-resource defaults, in configuration order.
DEFAULT_LANGUAGE_CODES = ("ru", "es", "de", "fr", "zh", "it")
DEFAULT_LANGUAGES: tuple[LanguageCode, ...] = tuple(
    language(code) for code in DEFAULT_LANGUAGE_CODES
)


@dataclass(frozen=True)
class SourceText:
    """An English image description with an opaque sample identifier."""

    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise PromptError("source id is empty")
        if not self.text.strip():
            raise PromptError(f"source text for {self.id!r} is empty")


@dataclass(frozen=True)
class ParallelText:
    """A source caption plus its ordered translations.

    Translation order is configuration order: it defines the language indices
    the variant-space ranking is built on.
    """

    source: SourceText
    translations: tuple[tuple[LanguageCode, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "translations", tuple(self.translations))
        seen_codes: set[str] = set()
        seen_names: set[str] = set()
        for lang, text in self.translations:
            if lang.code == ENGLISH.code:
                raise PromptError("translations must not include the English source")
            if lang.code in seen_codes:
                raise PromptError(f"duplicate translation language {lang.code!r}")
            if lang.display_name in seen_names:
                raise PromptError(f"duplicate display name {lang.display_name!r}")
            if not text.strip():
                raise PromptError(
                    f"empty translation for language {lang.code!r} "
                    f"(sample {self.source.id!r})"
                )
            seen_codes.add(lang.code)
            seen_names.add(lang.display_name)

    @property
    def languages(self) -> tuple[LanguageCode, ...]:
        return tuple(lang for lang, _ in self.translations)

    def entry_for(self, code: str) -> tuple[LanguageCode, str]:
        for lang, text in self.translations:
            if lang.code == code:
                return lang, text
        raise PromptError(
            f"language {code!r} has no translation for sample {self.source.id!r}"
        )

    @classmethod
    def from_mapping(
        cls, source: SourceText, translations: Mapping[str, str]
    ) -> "ParallelText":
        """Build from a ``code -> text`` mapping, preserving mapping order."""
        return cls(
            source=source,
            translations=tuple(
                (language(code), text) for code, text in translations.items()
            ),
        )


@dataclass(frozen=True)
class PromptVariant:
    """One ordered language subset with its rendered prompt.

    ``rank`` is the variant's index in the variant space; it is None for the
    English-only baseline and for ablation prompts, which live outside it.
    """

    language_order: tuple[LanguageCode, ...]
    rendered: str
    rank: Union[int, None] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "language_order", tuple(self.language_order))


class AblationKind(str, Enum):
    PMT2I = "pmt2i"
    ENGLISH_ONLY = "english_only"
    SINGLE_LANGUAGE = "single_language"
    REDUPLICATION = "reduplication"
    PARAPHRASE = "paraphrase"


OrderInput = Sequence[Union[LanguageCode, str]]


def render_prompt(parallel: ParallelText, order: OrderInput) -> str:
    """Render the multilingual prompt for one language order.

    The English source line always comes first; ``order`` may be empty, which
    yields the English-only baseline prompt. Entries may be LanguageCode
    values or bare codes resolved against ``parallel``.
    """
    lines = [f"{ENGLISH_DISPLAY}: {parallel.source.text}"]
    seen: set[str] = set()
    for entry in order:
        code = entry.code if isinstance(entry, LanguageCode) else entry
        if code in seen:
            raise PromptError(f"duplicate language {code!r} in prompt order")
        seen.add(code)
        lang, text = parallel.entry_for(code)
        lines.append(f"{lang.display_name}: {text}")
    return "\n".join(lines)


def render_reduplication(source: SourceText, n: int) -> str:
    """Render the original English line plus ``n`` duplicates of itself."""
    if n < 1:
        raise PromptError("reduplication count must be >= 1")
    line = f"{ENGLISH_DISPLAY}: {source.text}"
    return "\n".join([line] * (n + 1))


def render_paraphrase(source: SourceText, paraphrases: Sequence[str]) -> str:
    """Render the original English line plus one English line per paraphrase."""
    lines = [f"{ENGLISH_DISPLAY}: {source.text}"]
    for i, text in enumerate(paraphrases):
        if not text.strip():
            raise PromptError(f"paraphrase {i} is empty")
        lines.append(f"{ENGLISH_DISPLAY}: {text}")
    return "\n".join(lines)


def render_single_language(parallel: ParallelText, code: str) -> str:
    """Render a one-line prompt in a single language ("en" gives the source line)."""
    if code == ENGLISH.code:
        return f"{ENGLISH_DISPLAY}: {parallel.source.text}"
    lang, text = parallel.entry_for(code)
    return f"{lang.display_name}: {text}"


def count_variants(n: int) -> int:
    """Number of nonempty ordered subsets of ``n`` languages: sum of n!/(n-i)!."""
    if n < 0:
        raise PromptError("language count must be >= 0")
    if n > MAX_LANGUAGES:
        raise PromptError(
            f"variant space for {n} languages exceeds the supported bound "
            f"of {MAX_LANGUAGES}"
        )
    return sum(math.perm(n, size) for size in range(1, n + 1))


def _check_languages(languages: Sequence[LanguageCode]) -> None:
    codes = [lang.code for lang in languages]
    if len(set(codes)) != len(codes):
        raise PromptError(f"duplicate codes in language list: {codes}")
    if len(languages) > MAX_LANGUAGES:
        raise PromptError(
            f"{len(languages)} languages exceeds the supported bound of {MAX_LANGUAGES}"
        )


def variant_unrank(
    rank: int, languages: Sequence[LanguageCode]
) -> tuple[LanguageCode, ...]:
    """Map a rank to its language order.

    Ranks are laid out subset-size ascending; within one size the
    permutations are ordered lexicographically by sequences of language
    indices in ``languages`` order. Inverse of :func:`variant_rank`.
    """
    _check_languages(languages)
    n = len(languages)
    total = count_variants(n)
    if not 0 <= rank < total:
        raise PromptError(f"rank {rank} out of range [0, {total})")

    remaining = rank
    size = 1
    while remaining >= math.perm(n, size):
        remaining -= math.perm(n, size)
        size += 1

    available = list(range(n))
    picked: list[int] = []
    for position in range(size):
        block = math.perm(n - position - 1, size - position - 1)
        index, remaining = divmod(remaining, block)
        picked.append(available.pop(index))
    return tuple(languages[i] for i in picked)


def variant_rank(
    order: Sequence[LanguageCode], languages: Sequence[LanguageCode]
) -> int:
    """Map a language order back to its rank. Inverse of :func:`variant_unrank`."""
    _check_languages(languages)
    n = len(languages)
    size = len(order)
    if not 1 <= size <= n:
        raise PromptError(f"order length {size} outside [1, {n}]")
    index_of = {lang.code: i for i, lang in enumerate(languages)}

    offset = sum(math.perm(n, j) for j in range(1, size))
    available = list(range(n))
    rank = 0
    for position, lang in enumerate(order):
        if lang.code not in index_of:
            raise PromptError(f"language {lang.code!r} not in the configured list")
        try:
            slot = available.index(index_of[lang.code])
        except ValueError:
            raise PromptError(f"duplicate language {lang.code!r} in order") from None
        rank += slot * math.perm(n - position - 1, size - position - 1)
        available.pop(slot)
    return offset + rank


@dataclass(frozen=True)
class VariantStrategy:
    """How to pick variants from the space: all of them, the first k, or a seeded sample."""

    kind: str
    k: Union[int, None] = None
    seed: Union[int, None] = None

    def __post_init__(self) -> None:
        if self.kind not in ("all", "first_k", "sample"):
            raise PromptError(f"unknown variant strategy {self.kind!r}")
        if self.kind in ("first_k", "sample"):
            if self.k is None or self.k < 1:
                raise PromptError(f"strategy {self.kind!r} needs k >= 1")
        if self.kind == "sample" and self.seed is None:
            raise PromptError("sample strategy needs a seed")

    @classmethod
    def all(cls) -> "VariantStrategy":
        return cls("all")

    @classmethod
    def first(cls, k: int) -> "VariantStrategy":
        return cls("first_k", k=k)

    @classmethod
    def sample(cls, k: int, seed: int) -> "VariantStrategy":
        return cls("sample", k=k, seed=seed)

    @classmethod
    def parse(cls, spec: str) -> "VariantStrategy":
        """Parse the CLI form: ``all``, ``first:K``, or ``sample:K:SEED``."""
        parts = spec.split(":")
        try:
            if parts == ["all"]:
                return cls.all()
            if parts[0] == "first" and len(parts) == 2:
                return cls.first(int(parts[1]))
            if parts[0] == "sample" and len(parts) == 3:
                return cls.sample(int(parts[1]), int(parts[2]))
        except ValueError:
            pass
        raise PromptError(
            f"cannot parse variant strategy {spec!r} "
            "(expected all, first:K, or sample:K:SEED)"
        )

    def spec_string(self) -> str:
        if self.kind == "all":
            return "all"
        if self.kind == "first_k":
            return f"first:{self.k}"
        return f"sample:{self.k}:{self.seed}"


def select_ranks(n_languages: int, strategy: VariantStrategy) -> list[int]:
    """The variant ranks a strategy selects, in ascending order."""
    total = count_variants(n_languages)
    if strategy.kind == "all":
        return list(range(total))
    if total == 0:
        raise PromptError(
            f"strategy {strategy.spec_string()!r} needs at least one translation language"
        )
    if strategy.kind == "first_k":
        assert strategy.k is not None
        return list(range(min(strategy.k, total)))
    assert strategy.k is not None and strategy.seed is not None
    if strategy.k > total:
        raise PromptError(
            f"cannot sample {strategy.k} variants from a space of {total}"
        )
    rng = random.Random(strategy.seed)
    return sorted(rng.sample(range(total), strategy.k))


def enumerate_variants(
    parallel: ParallelText, strategy: VariantStrategy
) -> list[PromptVariant]:
    """Materialize the selected variants of one parallel text, rendered and ranked."""
    languages = parallel.languages
    variants = []
    for rank in select_ranks(len(languages), strategy):
        order = variant_unrank(rank, languages)
        variants.append(PromptVariant(order, render_prompt(parallel, order), rank))
    return variants
