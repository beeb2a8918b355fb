"""Persistent content-addressed cache for backend responses.

Entries are digest-named JSON files with a small sidecar recording which
operation and model produced them. Writes land in a temp file first and are
renamed into place, so concurrent readers (including other processes) never
see a partial entry. There is no eviction; ``clear()`` empties the directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional


def canonical_json(payload: Any) -> str:
    """Canonical request serialization: sorted keys, no insignificant whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cache_key(operation: str, payload: Any, model_id: str) -> str:
    """Digest identifying one logical request."""
    material = f"{operation}\n{model_id}\n{canonical_json(payload)}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheStats:
    entries: int
    size_bytes: int


class ResponseCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def _sidecar_path(self, digest: str) -> Path:
        return self.root / f"{digest}.meta.json"

    def get(self, digest: str) -> Optional[dict]:
        path = self._entry_path(digest)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return None  # torn or corrupt entry: treat as a miss

    def put(self, digest: str, response: dict, *, operation: str, model_id: str) -> None:
        sidecar = {
            "operation": operation,
            "model_id": model_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        self._write_atomic(self._sidecar_path(digest), canonical_json(sidecar))
        self._write_atomic(self._entry_path(digest), canonical_json(response))

    def _write_atomic(self, path: Path, text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
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

    def stats(self) -> CacheStats:
        entries = 0
        size = 0
        for path in self.root.glob("*.json"):
            size += path.stat().st_size
            if not path.name.endswith(".meta.json"):
                entries += 1
        return CacheStats(entries=entries, size_bytes=size)

    def clear(self) -> int:
        """Delete every entry; returns the number of response entries removed."""
        removed = 0
        for path in self.root.glob("*.json"):
            if not path.name.endswith(".meta.json"):
                removed += 1
            try:
                path.unlink()
            except FileNotFoundError:
                continue
        return removed
