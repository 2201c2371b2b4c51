"""Instruction pool reading.

A pool is a UTF-8 JSON-lines file; each line is an object with fields
``id`` (unsigned integer), ``text`` (non-empty string), and optionally
``metadata`` (string-to-string map). Ids must be unique and dense: line
``i`` carries id ``i``, so bundles exported from the pool can address items
positionally.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import PoolError

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class PoolItem:
    id: int
    text: str
    metadata: dict[str, str] | None = None


def read_pool(path: str | os.PathLike[str]) -> list[PoolItem]:
    items: list[PoolItem] = []
    seen: set[int] = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise PoolError(f"cannot read pool {os.fspath(path)}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            where = f"pool line {lineno}"
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise PoolError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict) or not {"id", "text"} <= set(doc) <= {
                "id",
                "text",
                "metadata",
            }:
                raise PoolError(f"{where}: expected fields id, text[, metadata]")
            item_id = doc["id"]
            if (
                isinstance(item_id, bool)
                or not isinstance(item_id, int)
                or not 0 <= item_id <= _U64_MAX
            ):
                raise PoolError(
                    f"{where}: id must be an unsigned 64-bit integer, got {item_id!r}"
                )
            if item_id in seen:
                raise PoolError(f"{where}: duplicate instruction id {item_id}")
            seen.add(item_id)
            if not isinstance(doc["text"], str) or not doc["text"]:
                raise PoolError(f"{where}: text must be a non-empty string")
            metadata = doc.get("metadata")
            if metadata is not None:
                if not isinstance(metadata, dict) or not all(
                    isinstance(k, str) and isinstance(v, str)
                    for k, v in metadata.items()
                ):
                    raise PoolError(f"{where}: metadata must map strings to strings")
            items.append(PoolItem(id=item_id, text=doc["text"], metadata=metadata))
    for pos, item in enumerate(items):
        if item.id != pos:
            raise PoolError(
                f"instruction ids must be dense and zero-based: position {pos} "
                f"holds id {item.id}"
            )
    if not items:
        raise PoolError(f"pool {os.fspath(path)} contains no instructions")
    return items
