"""Deterministic run planning and resumable execution.

A run is dataset x prompt variants x seeds. Planning is pure: it fixes the
work-item order (sample, variant rank, seed). Execution translates captions
(unless translations ship with the dataset), renders prompts, generates
candidate images through the configured backends, reranks each sample's
candidates against the ORIGINAL English caption, and records everything in a
JSON manifest. Completed items are checkpointed as JSON Lines so an
interrupted run resumes without re-executing finished work.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__
from .backends.cache import ResponseCache, canonical_json
from .backends.client import (
    BackendClient,
    BackendEndpoint,
    GeneratedImage,
    RetryPolicy,
)
from .backends.mock import MockBackend
from .backends.transport import HttpTransport
from .dataset import DatasetRecord, load_prompts
from .dataset import sample as sample_records
from .errors import BackendError, ConfigError, PipelineError
from .prompt_core import (
    AblationKind,
    LanguageCode,
    ParallelText,
    SourceText,
    VariantStrategy,
    language,
    render_paraphrase,
    render_prompt,
    render_reduplication,
    render_single_language,
    select_ranks,
    variant_unrank,
)
from .rerank import Selection, rerank_candidates

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1

CAPABILITIES = (
    "translate",
    "paraphrase",
    "generate",
    "embed",
    "clip_i",
    "dino",
    "judge",
    "reward",
    "vqa",
)


@dataclass(frozen=True)
class ImageParams:
    width: int = 64
    height: int = 64

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError("image dimensions must be >= 1")


@dataclass(frozen=True)
class EndpointRouting:
    """Capability -> endpoint, with optional per-language translate routes."""

    endpoints: Mapping[str, BackendEndpoint] = field(default_factory=dict)
    translate_by_language: Mapping[str, BackendEndpoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoints", dict(self.endpoints))
        object.__setattr__(
            self, "translate_by_language", dict(self.translate_by_language)
        )
        unknown = set(self.endpoints) - set(CAPABILITIES)
        if unknown:
            raise ConfigError(f"unknown capabilities in routing: {sorted(unknown)}")

    def endpoint_for(
        self, capability: str, language_code: Optional[str] = None
    ) -> Optional[BackendEndpoint]:
        if capability == "translate" and language_code is not None:
            override = self.translate_by_language.get(language_code)
            if override is not None:
                return override
        return self.endpoints.get(capability)

    def require(
        self, capability: str, language_code: Optional[str] = None
    ) -> BackendEndpoint:
        endpoint = self.endpoint_for(capability, language_code)
        if endpoint is None:
            if capability == "translate" and language_code is not None:
                raise ConfigError(
                    f"no translate endpoint configured for language {language_code!r}"
                )
            raise ConfigError(f"no endpoint configured for capability {capability!r}")
        return endpoint


def _endpoint_to_dict(endpoint: BackendEndpoint) -> dict:
    return {
        "base_url": endpoint.base_url,
        "auth_token_ref": endpoint.auth_token_ref,
        "timeout": endpoint.timeout,
        "max_in_flight": endpoint.max_in_flight,
        "retry": {
            "max_attempts": endpoint.retry.max_attempts,
            "base_backoff": endpoint.retry.base_backoff,
            "factor": endpoint.retry.factor,
        },
        "model_id": endpoint.model_id,
    }


def _endpoint_from_dict(obj: dict) -> BackendEndpoint:
    retry = obj.get("retry") or {}
    return BackendEndpoint(
        base_url=obj["base_url"],
        auth_token_ref=obj.get("auth_token_ref"),
        timeout=float(obj.get("timeout", 30.0)),
        max_in_flight=int(obj.get("max_in_flight", 4)),
        retry=RetryPolicy(
            max_attempts=int(retry.get("max_attempts", 3)),
            base_backoff=float(retry.get("base_backoff", 0.1)),
            factor=float(retry.get("factor", 2.0)),
        ),
        model_id=str(obj.get("model_id", "")),
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines a run.

    The config digest covers the fields that determine results (dataset,
    languages, variants, seeds, image size, routing); storage locations and
    operational knobs (output_dir, cache_dir, workers, fail_fast) stay out of
    it so a finished run can be relocated or re-executed elsewhere and still
    count as the same run.
    """

    dataset_path: str
    output_dir: str
    languages: tuple[LanguageCode, ...] = ()
    routing: EndpointRouting = field(default_factory=EndpointRouting)
    ablation: AblationKind = AblationKind.PMT2I
    variant_strategy: VariantStrategy = field(default_factory=VariantStrategy.all)
    seeds_per_variant: tuple[int, ...] = (0,)
    image_params: ImageParams = field(default_factory=ImageParams)
    ablation_n: Optional[int] = None
    sample_n: Optional[int] = None
    sample_seed: int = 0
    cache_dir: Optional[str] = None
    cache_generation: bool = False
    fail_fast: bool = False
    workers: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "languages", tuple(self.languages))
        object.__setattr__(self, "seeds_per_variant", tuple(self.seeds_per_variant))
        if isinstance(self.ablation, str):
            object.__setattr__(self, "ablation", AblationKind(self.ablation))
        if not self.seeds_per_variant:
            raise ConfigError("seeds_per_variant must not be empty")
        if len(set(self.seeds_per_variant)) != len(self.seeds_per_variant):
            raise ConfigError("seeds_per_variant contains duplicates")
        if self.ablation == AblationKind.PMT2I and not self.languages:
            raise ConfigError("pmt2i runs need at least one translation language")
        codes = [lang.code for lang in self.languages]
        if len(set(codes)) != len(codes):
            raise ConfigError(f"duplicate languages in config: {codes}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "output_dir": self.output_dir,
            "languages": [
                {"code": lang.code, "display_name": lang.display_name}
                for lang in self.languages
            ],
            "routing": {
                "endpoints": {
                    cap: _endpoint_to_dict(ep)
                    for cap, ep in sorted(self.routing.endpoints.items())
                },
                "translate_by_language": {
                    code: _endpoint_to_dict(ep)
                    for code, ep in sorted(self.routing.translate_by_language.items())
                },
            },
            "ablation": self.ablation.value,
            "variant_strategy": self.variant_strategy.spec_string(),
            "seeds_per_variant": list(self.seeds_per_variant),
            "image_params": {
                "width": self.image_params.width,
                "height": self.image_params.height,
            },
            "ablation_n": self.ablation_n,
            "sample_n": self.sample_n,
            "sample_seed": self.sample_seed,
            "cache_dir": self.cache_dir,
            "cache_generation": self.cache_generation,
            "fail_fast": self.fail_fast,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        languages = []
        for entry in obj.get("languages", []):
            if isinstance(entry, str):
                languages.append(language(entry))
            else:
                languages.append(
                    LanguageCode(entry["code"], entry["display_name"])
                )
        routing_obj = obj.get("routing") or {}
        routing = EndpointRouting(
            endpoints={
                cap: _endpoint_from_dict(ep)
                for cap, ep in (routing_obj.get("endpoints") or {}).items()
            },
            translate_by_language={
                code: _endpoint_from_dict(ep)
                for code, ep in (routing_obj.get("translate_by_language") or {}).items()
            },
        )
        image = obj.get("image_params") or {}
        return cls(
            dataset_path=obj["dataset_path"],
            output_dir=obj["output_dir"],
            languages=tuple(languages),
            routing=routing,
            ablation=AblationKind(obj.get("ablation", "pmt2i")),
            variant_strategy=VariantStrategy.parse(obj.get("variant_strategy", "all")),
            seeds_per_variant=tuple(obj.get("seeds_per_variant", [0])),
            image_params=ImageParams(
                width=int(image.get("width", 64)), height=int(image.get("height", 64))
            ),
            ablation_n=obj.get("ablation_n"),
            sample_n=obj.get("sample_n"),
            sample_seed=int(obj.get("sample_seed", 0)),
            cache_dir=obj.get("cache_dir"),
            cache_generation=bool(obj.get("cache_generation", False)),
            fail_fast=bool(obj.get("fail_fast", False)),
            workers=int(obj.get("workers", 4)),
        )

    def digest(self) -> str:
        semantic = self.to_dict()
        for operational in ("output_dir", "cache_dir", "workers", "fail_fast"):
            semantic.pop(operational, None)
        return hashlib.sha256(canonical_json(semantic).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PlanVariant:
    """One prompt shape shared by every sample: a ranked language order or an ablation."""

    label: str
    kind: AblationKind
    rank: Optional[int] = None
    language_codes: tuple[str, ...] = ()
    n: Optional[int] = None  # reduplication/paraphrase equivalents


@dataclass(frozen=True)
class WorkItem:
    sample_index: int
    sample_id: str
    variant_index: int
    label: str
    seed_index: int
    seed: int

    @property
    def item_id(self) -> str:
        return f"{self.sample_id}::{self.label}::{self.seed}"


@dataclass
class RunPlan:
    config: RunConfig
    records: list[DatasetRecord]
    variants: list[PlanVariant]
    items: list[WorkItem]
    translation_pairs: list[tuple[str, str]]  # (sample_id, language code), deduplicated


@dataclass
class CandidateRecord:
    sample_id: str
    label: str
    rank: Optional[int]
    prompt: str
    seed: int
    image_path: Optional[str]
    backend_id: str
    status: str  # "ok" | "failed"
    error: Optional[str] = None
    timing: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "label": self.label,
            "rank": self.rank,
            "prompt": self.prompt,
            "seed": self.seed,
            "image_path": self.image_path,
            "backend_id": self.backend_id,
            "status": self.status,
            "error": self.error,
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CandidateRecord":
        return cls(
            sample_id=obj["sample_id"],
            label=obj["label"],
            rank=obj.get("rank"),
            prompt=obj["prompt"],
            seed=obj["seed"],
            image_path=obj.get("image_path"),
            backend_id=obj.get("backend_id", ""),
            status=obj.get("status", "ok"),
            error=obj.get("error"),
            timing=obj.get("timing"),
        )


@dataclass
class SampleSelection:
    sample_id: str
    chosen_index: int
    model_id: str
    scores: list[dict]  # {"label","seed","score"} in candidate order

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "chosen_index": self.chosen_index,
            "model_id": self.model_id,
            "scores": self.scores,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SampleSelection":
        return cls(
            sample_id=obj["sample_id"],
            chosen_index=obj["chosen_index"],
            model_id=obj.get("model_id", ""),
            scores=list(obj.get("scores", [])),
        )

    @classmethod
    def from_selection(cls, sample_id: str, selection: Selection) -> "SampleSelection":
        return cls(
            sample_id=sample_id,
            chosen_index=selection.chosen_index,
            model_id=selection.model_id,
            scores=[
                {"label": c.label, "seed": c.seed, "score": c.score}
                for c in selection.scores
            ],
        )


@dataclass
class RunManifest:
    config_digest: str
    records: list[CandidateRecord]
    selections: list[SampleSelection]
    failed_samples: list[str]
    created_at: str
    tool_version: str = __version__
    schema: int = MANIFEST_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "created_at": self.created_at,
            "records": [record.to_dict() for record in self.records],
            "selections": [selection.to_dict() for selection in self.selections],
            "failed_samples": list(self.failed_samples),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunManifest":
        if obj.get("schema") != MANIFEST_SCHEMA:
            raise PipelineError(f"unsupported manifest schema {obj.get('schema')!r}")
        return cls(
            config_digest=obj["config_digest"],
            records=[CandidateRecord.from_dict(r) for r in obj.get("records", [])],
            selections=[
                SampleSelection.from_dict(s) for s in obj.get("selections", [])
            ],
            failed_samples=list(obj.get("failed_samples", [])),
            created_at=obj.get("created_at", ""),
            tool_version=obj.get("tool_version", ""),
        )

    def selection_for(self, sample_id: str) -> Optional[SampleSelection]:
        for selection in self.selections:
            if selection.sample_id == sample_id:
                return selection
        return None

    def candidates_for(self, sample_id: str) -> list[CandidateRecord]:
        return [r for r in self.records if r.sample_id == sample_id]


def load_manifest(path: str | Path) -> RunManifest:
    try:
        return RunManifest.from_dict(
            json.loads(Path(path).read_text(encoding="utf-8"))
        )
    except FileNotFoundError:
        raise PipelineError(f"no manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise PipelineError(f"corrupt manifest at {path}: {exc}") from exc


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _write_bytes_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


_SAFE_COMPONENT = re.compile(r"[^A-Za-z0-9._-]")


def _fs_component(name: str) -> str:
    """Filesystem-safe path component; collision-proofed when sanitized."""
    safe = _SAFE_COMPONENT.sub("-", name).strip(".")
    if safe != name or not safe:
        suffix = hashlib.sha256(name.encode("utf-8")).hexdigest()[:8]
        safe = f"{safe or 'x'}-{suffix}"
    return safe


class CheckpointLog:
    """Append-only JSONL of completed work items, headed by the config digest."""

    def __init__(self, path: Path, config_digest: str):
        self.path = path
        self.config_digest = config_digest
        self._lock = threading.Lock()

    def load(self) -> dict[str, CandidateRecord]:
        """Completed records keyed by item id; {} when no checkpoint exists."""
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            return {}
        if not lines:
            return {}
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise PipelineError(f"corrupt checkpoint header in {self.path}") from exc
        if header.get("config_digest") != self.config_digest:
            raise ConfigError(
                "checkpoint was written by a different configuration; "
                "refusing to resume (config digest mismatch)"
            )
        done: dict[str, CandidateRecord] = {}
        for index, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                if index == len(lines):  # torn final line from an interrupted write
                    logger.warning("dropping torn checkpoint line %d", index)
                    continue
                raise PipelineError(
                    f"corrupt checkpoint line {index} in {self.path}"
                ) from None
            record = CandidateRecord.from_dict(entry["record"])
            done[entry["item_id"]] = record
        return done

    def append(self, item_id: str, record: CandidateRecord) -> None:
        line = json.dumps(
            {"item_id": item_id, "record": record.to_dict()}, ensure_ascii=False
        )
        with self._lock:
            is_new = not self.path.exists()
            with self.path.open("a", encoding="utf-8") as handle:
                if is_new:
                    header = json.dumps(
                        {"schema": MANIFEST_SCHEMA, "config_digest": self.config_digest}
                    )
                    handle.write(header + "\n")
                handle.write(line + "\n")
                handle.flush()


class ClientPool:
    """One shared BackendClient per (capability, language) route.

    Endpoints whose base_url starts with ``mock://`` get an in-process
    deterministic MockBackend (one per distinct URL, shared across
    capabilities), which is how offline runs and tests work end to end.
    """

    def __init__(
        self,
        routing: EndpointRouting,
        *,
        cache: Optional[ResponseCache] = None,
        cache_generation: bool = False,
        transport_factory=None,
    ):
        self.routing = routing
        self.cache = cache
        self.cache_generation = cache_generation
        self._transport_factory = transport_factory or self._default_transport
        self.mock_backends: dict[str, MockBackend] = {}
        self._clients: dict[tuple[str, Optional[str]], BackendClient] = {}
        self._lock = threading.Lock()

    def _default_transport(self, endpoint: BackendEndpoint):
        if endpoint.base_url.startswith("mock://"):
            backend = self.mock_backends.get(endpoint.base_url)
            if backend is None:
                backend = MockBackend()
                self.mock_backends[endpoint.base_url] = backend
            return backend
        return HttpTransport(
            endpoint.base_url,
            timeout=endpoint.timeout,
            auth_token_ref=endpoint.auth_token_ref,
        )

    def client(
        self, capability: str, language_code: Optional[str] = None
    ) -> BackendClient:
        endpoint = self.routing.require(capability, language_code)
        key = (capability, language_code if capability == "translate" else None)
        with self._lock:
            existing = self._clients.get(key)
            if existing is not None:
                return existing
            client = BackendClient(
                endpoint,
                transport=self._transport_factory(endpoint),
                cache=self.cache,
                cache_generation=self.cache_generation and capability == "generate",
            )
            self._clients[key] = client
            return client

    @classmethod
    def for_config(cls, config: RunConfig, transport_factory=None) -> "ClientPool":
        cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        return cls(
            config.routing,
            cache=cache,
            cache_generation=config.cache_generation,
            transport_factory=transport_factory,
        )


def plan_variants(config: RunConfig) -> list[PlanVariant]:
    kind = config.ablation
    if kind == AblationKind.PMT2I:
        ranks = select_ranks(len(config.languages), config.variant_strategy)
        variants = []
        for rank in ranks:
            order = variant_unrank(rank, config.languages)
            variants.append(
                PlanVariant(
                    label=str(rank),
                    kind=kind,
                    rank=rank,
                    language_codes=tuple(lang.code for lang in order),
                )
            )
        return variants
    if kind == AblationKind.ENGLISH_ONLY:
        return [PlanVariant(label="english_only", kind=kind)]
    if kind == AblationKind.SINGLE_LANGUAGE:
        if not config.languages:
            raise ConfigError("single_language ablation needs translation languages")
        return [
            PlanVariant(
                label=f"single_{lang.code}", kind=kind, language_codes=(lang.code,)
            )
            for lang in config.languages
        ]
    n = config.ablation_n or len(config.languages)
    if n < 1:
        raise ConfigError(f"{kind.value} ablation needs n >= 1 (set ablation_n)")
    return [PlanVariant(label=kind.value, kind=kind, n=n)]


def plan_run(config: RunConfig, dataset: Sequence[DatasetRecord]) -> RunPlan:
    """Fix the deterministic work order for a run.

    Items are ordered by (sample index, variant index, seed index); variant
    index follows ascending rank. Translation pairs are deduplicated per
    (sample, language) and skip languages the dataset already supplies.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    records = list(dataset)
    if config.sample_n is not None:
        records = sample_records(records, config.sample_n, config.sample_seed)

    variants = plan_variants(config)
    items = [
        WorkItem(
            sample_index=sample_index,
            sample_id=record.id,
            variant_index=variant_index,
            label=variant.label,
            seed_index=seed_index,
            seed=seed,
        )
        for sample_index, record in enumerate(records)
        for variant_index, variant in enumerate(variants)
        for seed_index, seed in enumerate(config.seeds_per_variant)
    ]

    needed_codes: list[str] = []
    if config.ablation in (AblationKind.PMT2I, AblationKind.SINGLE_LANGUAGE):
        seen: set[str] = set()
        for variant in variants:
            for code in variant.language_codes:
                if code not in seen:
                    seen.add(code)
                    needed_codes.append(code)

    translation_pairs = []
    for record in records:
        supplied = set(record.translations or {})
        for code in needed_codes:
            if code not in supplied:
                translation_pairs.append((record.id, code))

    return RunPlan(
        config=config,
        records=records,
        variants=variants,
        items=items,
        translation_pairs=translation_pairs,
    )


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class _RunState:
    """Mutable execution state for one run directory."""

    def __init__(self, plan: RunPlan, clients: ClientPool):
        self.plan = plan
        self.config = plan.config
        self.clients = clients
        self.out_dir = Path(plan.config.output_dir)
        self.digest = plan.config.digest()
        self.checkpoint = CheckpointLog(self.out_dir / "checkpoint.jsonl", self.digest)
        self.parallels: dict[str, ParallelText] = {}
        self.paraphrases: dict[str, list[str]] = {}
        self.sample_errors: dict[str, str] = {}


def _prepare_run_dir(state: _RunState) -> None:
    state.out_dir.mkdir(parents=True, exist_ok=True)
    config_path = state.out_dir / "config.json"
    if config_path.exists():
        existing = RunConfig.from_dict(
            json.loads(config_path.read_text(encoding="utf-8"))
        )
        if existing.digest() != state.digest:
            raise ConfigError(
                f"output dir {state.out_dir} belongs to a different configuration"
            )
    else:
        _write_atomic(
            config_path,
            json.dumps(state.config.to_dict(), indent=2, ensure_ascii=False, sort_keys=True),
        )


def _parallel_for_record(
    state: _RunState, record: DatasetRecord
) -> ParallelText:
    """Build the record's ParallelText in config language order.

    Pre-supplied translations short-circuit the translate backend; missing
    languages are translated through the per-language route.
    """
    source = SourceText(record.id, record.text)
    supplied = record.translations or {}
    entries = []
    for lang in state.config.languages:
        text = supplied.get(lang.code)
        if text is None:
            client = state.clients.client("translate", lang.code)
            text = client.translate(record.text, "en", lang.code)
        entries.append((lang, text))
    return ParallelText(source=source, translations=tuple(entries))


def _prepare_prompt_inputs(state: _RunState) -> None:
    """Resolve translations/paraphrases for every sample, in parallel."""
    config = state.config
    needs_parallel = config.ablation in (
        AblationKind.PMT2I,
        AblationKind.SINGLE_LANGUAGE,
    )
    needs_paraphrase = config.ablation == AblationKind.PARAPHRASE

    def prepare(record: DatasetRecord) -> None:
        try:
            if needs_parallel:
                state.parallels[record.id] = _parallel_for_record(state, record)
            elif needs_paraphrase:
                n = config.ablation_n or len(config.languages)
                client = state.clients.client("paraphrase")
                state.paraphrases[record.id] = client.paraphrase(record.text, n)
        except BackendError as exc:
            if config.fail_fast:
                raise
            state.sample_errors[record.id] = str(exc)

    if not (needs_parallel or needs_paraphrase):
        return
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(prepare, record) for record in state.plan.records]
        for future in futures:
            future.result()


def _prompt_for(state: _RunState, record: DatasetRecord, variant: PlanVariant) -> str:
    source = SourceText(record.id, record.text)
    if variant.kind == AblationKind.PMT2I:
        return render_prompt(state.parallels[record.id], variant.language_codes)
    if variant.kind == AblationKind.ENGLISH_ONLY:
        return render_prompt(
            ParallelText(source=source, translations=()), ()
        )
    if variant.kind == AblationKind.SINGLE_LANGUAGE:
        return render_single_language(
            state.parallels[record.id], variant.language_codes[0]
        )
    if variant.kind == AblationKind.REDUPLICATION:
        assert variant.n is not None
        return render_reduplication(source, variant.n)
    assert variant.kind == AblationKind.PARAPHRASE
    return render_paraphrase(source, state.paraphrases[record.id])


def _image_relpath(item: WorkItem) -> str:
    return f"{_fs_component(item.sample_id)}/{_fs_component(item.label)}_{item.seed}.png"


def _execute_item(
    state: _RunState, item: WorkItem, variant: PlanVariant, record: DatasetRecord
) -> CandidateRecord:
    started = _now_iso()
    clock = time.monotonic()
    prompt = _prompt_for(state, record, variant)
    client = state.clients.client("generate")
    image = client.generate_image(
        prompt,
        item.seed,
        width=state.config.image_params.width,
        height=state.config.image_params.height,
    )
    relpath = _image_relpath(item)
    _write_bytes_atomic(state.out_dir / relpath, image.png_bytes)
    return CandidateRecord(
        sample_id=item.sample_id,
        label=item.label,
        rank=variant.rank,
        prompt=prompt,
        seed=item.seed,
        image_path=relpath,
        backend_id=image.backend_id,
        status="ok",
        timing={"started_at": started, "elapsed_s": time.monotonic() - clock},
    )


def _failed_record(
    state: _RunState,
    item: WorkItem,
    variant: PlanVariant,
    record: DatasetRecord,
    error: str,
) -> CandidateRecord:
    try:
        prompt = _prompt_for(state, record, variant)
    except Exception:  # prompt inputs may be missing when the sample failed early
        prompt = record.text
    return CandidateRecord(
        sample_id=item.sample_id,
        label=item.label,
        rank=variant.rank,
        prompt=prompt,
        seed=item.seed,
        image_path=None,
        backend_id="",
        status="failed",
        error=error,
    )


def _generate_candidates(
    state: _RunState, done: dict[str, CandidateRecord]
) -> dict[str, CandidateRecord]:
    plan = state.plan
    config = state.config
    records_by_id = {record.id: record for record in plan.records}
    variants = plan.variants
    pending = [item for item in plan.items if item.item_id not in done]

    results: dict[str, CandidateRecord] = dict(done)

    def run_one(item: WorkItem) -> CandidateRecord:
        record = records_by_id[item.sample_id]
        variant = variants[item.variant_index]
        prior_error = state.sample_errors.get(item.sample_id)
        if prior_error is not None:
            return _failed_record(state, item, variant, record, prior_error)
        return _execute_item(state, item, variant, record)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {pool.submit(run_one, item): item for item in pending}
        try:
            for future in as_completed(futures):
                item = futures[future]
                try:
                    candidate = future.result()
                except BackendError as exc:
                    if config.fail_fast:
                        raise
                    candidate = _failed_record(
                        state,
                        item,
                        variants[item.variant_index],
                        records_by_id[item.sample_id],
                        str(exc),
                    )
                if candidate.status == "ok":
                    state.checkpoint.append(item.item_id, candidate)
                results[item.item_id] = candidate
        except BaseException:
            for future in futures:
                future.cancel()
            raise
    return results


def _select_for_samples(
    state: _RunState, ordered_records: list[CandidateRecord]
) -> tuple[list[SampleSelection], list[str]]:
    embed_client = state.clients.client("embed")
    selections: list[SampleSelection] = []
    failed_samples: list[str] = []
    for record in state.plan.records:
        candidates = [
            c for c in ordered_records if c.sample_id == record.id and c.status == "ok"
        ]
        if not candidates:
            failed_samples.append(record.id)
            continue
        images = []
        for candidate in candidates:
            assert candidate.image_path is not None
            png = (state.out_dir / candidate.image_path).read_bytes()
            images.append(
                GeneratedImage(
                    png_bytes=png,
                    width=state.config.image_params.width,
                    height=state.config.image_params.height,
                    seed=candidate.seed,
                    backend_id=candidate.backend_id,
                )
            )
        references = [(c.sample_id, c.label, c.seed) for c in candidates]
        selection = rerank_candidates(
            record.text, images, embed_client, references=references
        )
        selections.append(SampleSelection.from_selection(record.id, selection))
    return selections, failed_samples


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    _write_atomic(
        Path(path),
        json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False, sort_keys=True),
    )


def execute_run(plan: RunPlan, clients: ClientPool) -> RunManifest:
    """Run (or finish) a plan; idempotent over a completed output directory."""
    state = _RunState(plan, clients)
    _prepare_run_dir(state)

    manifest_path = state.out_dir / "manifest.json"
    if manifest_path.exists():
        manifest = load_manifest(manifest_path)
        if manifest.config_digest == state.digest:
            logger.info("run already complete in %s", state.out_dir)
            return manifest
        raise ConfigError(
            f"manifest in {state.out_dir} belongs to a different configuration"
        )

    done = state.checkpoint.load()
    _prepare_prompt_inputs(state)
    results = _generate_candidates(state, done)

    ordered = [results[item.item_id] for item in plan.items]
    selections, failed_samples = _select_for_samples(state, ordered)

    manifest = RunManifest(
        config_digest=state.digest,
        records=ordered,
        selections=selections,
        failed_samples=failed_samples,
        created_at=_now_iso(),
    )
    write_manifest(manifest, manifest_path)
    return manifest


def resume_run(output_dir: str | Path, clients: ClientPool) -> RunManifest:
    """Finish an interrupted run; a completed run is returned as-is.

    Refuses to resume when the config or checkpoint in the directory no
    longer match each other (digest mismatch).
    """
    out = Path(output_dir)
    config_path = out / "config.json"
    if not config_path.exists():
        raise ConfigError(f"{out} does not contain a run (no config.json)")
    config = RunConfig.from_dict(json.loads(config_path.read_text(encoding="utf-8")))
    config = _rebase_output_dir(config, out)

    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = load_manifest(manifest_path)
        if manifest.config_digest != config.digest():
            raise ConfigError(
                f"manifest in {out} does not match config.json (digest mismatch)"
            )
        return manifest

    dataset = load_prompts(config.dataset_path)
    plan = plan_run(config, dataset)
    return execute_run(plan, clients)


def _rebase_output_dir(config: RunConfig, out: Path) -> RunConfig:
    if Path(config.output_dir) == out:
        return config
    # Run directory was moved; keep digest-relevant fields, point at the new home.
    obj = config.to_dict()
    obj["output_dir"] = str(out)
    return RunConfig.from_dict(obj)
