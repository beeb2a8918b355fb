"""Prompt dataset ingestion and seeded subsampling.

The canonical format is JSONL with one record per line:

    {"id": "...", "text": "...",
     "reference_image": "relative/or/absolute.png",   # optional
     "questions": ["...", ...],                        # optional
     "translations": {"de": "...", ...}}               # optional

CSV is accepted for plain prompt lists (a ``text`` column, optional ``id``).
Relative reference-image paths are resolved against the dataset file's
directory at load time. Pre-supplied translations let a run skip the
translate backend entirely.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .errors import DatasetError
from .prompt_core import ParallelText, PromptError, SourceText, language


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    text: str
    reference_image_path: Optional[str] = None
    questions: tuple[str, ...] = ()
    translations: Optional[Mapping[str, str]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        if self.translations is not None:
            object.__setattr__(self, "translations", dict(self.translations))

    def source(self) -> SourceText:
        return SourceText(self.id, self.text)

    def parallel(self) -> Optional[ParallelText]:
        """The record's pre-supplied translations as a ParallelText, if any."""
        if not self.translations:
            return None
        return ParallelText.from_mapping(self.source(), self.translations)


def _validate_record(record: DatasetRecord, line_number: int) -> None:
    if not record.id:
        raise DatasetError(f"line {line_number}: record id is empty")
    if not record.text.strip():
        raise DatasetError(f"line {line_number}: record text is empty")
    for question in record.questions:
        if not question.strip():
            raise DatasetError(f"line {line_number}: empty question string")
    if record.translations:
        try:
            record.parallel()
        except PromptError as exc:
            raise DatasetError(f"line {line_number}: {exc}") from exc


def _resolve_reference(path_value: str, base_dir: Path) -> str:
    path = Path(path_value)
    if not path.is_absolute():
        path = base_dir / path
    return str(path)


def _record_from_json(obj: dict, line_number: int, base_dir: Path) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_number}: expected a JSON object")
    unknown = set(obj) - {"id", "text", "reference_image", "questions", "translations"}
    if unknown:
        raise DatasetError(f"line {line_number}: unknown fields {sorted(unknown)}")
    try:
        record = DatasetRecord(
            id=str(obj["id"]),
            text=str(obj["text"]),
            reference_image_path=(
                _resolve_reference(obj["reference_image"], base_dir)
                if obj.get("reference_image")
                else None
            ),
            questions=tuple(obj.get("questions") or ()),
            translations=obj.get("translations"),
        )
    except KeyError as exc:
        raise DatasetError(f"line {line_number}: missing field {exc.args[0]!r}") from exc
    _validate_record(record, line_number)
    return record


def _load_jsonl(path: Path) -> list[tuple[int, DatasetRecord]]:
    rows: list[tuple[int, DatasetRecord]] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_number}: malformed JSON ({exc.msg})") from exc
            rows.append((line_number, _record_from_json(obj, line_number, path.parent)))
    return rows


def _load_csv(path: Path) -> list[tuple[int, DatasetRecord]]:
    rows: list[tuple[int, DatasetRecord]] = []
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "text" not in reader.fieldnames:
            raise DatasetError(f"{path}: CSV needs a header with a 'text' column")
        for line_number, row in enumerate(reader, start=2):  # header is line 1
            record = DatasetRecord(
                id=str(row.get("id") or line_number - 1),
                text=row["text"] or "",
            )
            _validate_record(record, line_number)
            rows.append((line_number, record))
    return rows


def load_prompts(path: str | Path, format: Optional[str] = None) -> list[DatasetRecord]:
    """Load records in file order; duplicate ids are an error naming both lines."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "jsonl":
        rows = _load_jsonl(path)
    elif format == "csv":
        rows = _load_csv(path)
    else:
        raise DatasetError(f"unknown dataset format {format!r}")

    seen: dict[str, int] = {}
    for line_number, record in rows:
        if record.id in seen:
            raise DatasetError(
                f"duplicate id {record.id!r} on lines {seen[record.id]} and {line_number}"
            )
        seen[record.id] = line_number
    return [record for _, record in rows]


def write_jsonl(records: Sequence[DatasetRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            obj: dict = {"id": record.id, "text": record.text}
            if record.reference_image_path:
                obj["reference_image"] = record.reference_image_path
            if record.questions:
                obj["questions"] = list(record.questions)
            if record.translations:
                obj["translations"] = dict(record.translations)
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")


def sample(
    records: Sequence[DatasetRecord], n: int, seed: int
) -> list[DatasetRecord]:
    """Uniform sample without replacement, preserving original relative order."""
    if not 1 <= n <= len(records):
        raise DatasetError(f"sample size {n} outside [1, {len(records)}]")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(records)), n))
    return [records[i] for i in chosen]


def with_translations(
    record: DatasetRecord, translations: Mapping[str, str]
) -> DatasetRecord:
    return replace(record, translations=dict(translations))
