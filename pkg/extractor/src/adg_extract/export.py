"""Pool-to-bundle export: generate, pool, encode, validate, write.

For every pool instruction the backend samples K answers; each answer's
hidden states are stripped of end-of-sequence positions, pooled to one
vector, and cast to float32 exactly as it will be written. An instruction
is *degenerate* when any of its K answers has nothing left to pool after
one retry, pools to a non-finite vector, or pools to a vector whose norm
is at or below 1e-12 (too small to unit-normalize downstream) — or when
its semantic encoding is non-finite or zero. Degenerate instructions are
rejected from both bundles: a hard error normally, or skipped with a
report line per instruction in permissive mode.

Answer vectors are exported un-normalized; unit normalization happens in
the scoring engine so the original magnitudes stay recoverable.

Outputs, all in the target directory:
    answers.adge                (survivors, K, answer_dim) float32 bundle
    semantic.adge               (survivors, 1, semantic_dim) float32 bundle
    degenerate-report.jsonl     one {"id", "reason"} line per rejected item
    extraction-metadata.json    model, depth, resolved layer window,
                                hidden-state variant, encoder, dims, seed

Survivor order preserves pool order, so exported item j corresponds to the
j-th non-degenerate pool id — recoverable from the pool plus the report.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import adge
from .backends import load_backend
from .config import ExtractionConfig, resolve_layer_window
from .errors import BackendError, ExportError
from .pool import PoolItem, read_pool
from .pooling import mask_eos, pool_states
from .semantic import load_encoder

ANSWERS_NAME = "answers.adge"
SEMANTIC_NAME = "semantic.adge"
REPORT_NAME = "degenerate-report.jsonl"
METADATA_NAME = "extraction-metadata.json"

NORM_FLOOR = 1e-12


def _pool_answers(
    item: PoolItem,
    backend,
    window: tuple[int, int],
    cfg: ExtractionConfig,
) -> tuple[np.ndarray | None, list[str]]:
    """Sample, retry empties once, pool; return (K, d) float32 or reasons."""
    samples = backend.generate(
        item.text,
        instruction_id=item.id,
        count=cfg.k,
        attempt=0,
        window=window,
        config=cfg,
    )
    if len(samples) != cfg.k:
        raise BackendError(
            f"backend returned {len(samples)} samples for instruction "
            f"{item.id}, expected {cfg.k}"
        )
    blocks = [
        mask_eos(s.token_ids, s.hidden, backend.eos_token_id)[1] for s in samples
    ]
    empty = [j for j, block in enumerate(blocks) if block.shape[1] == 0]
    if empty:
        retries = backend.generate(
            item.text,
            instruction_id=item.id,
            count=len(empty),
            attempt=1,
            window=window,
            config=cfg,
        )
        if len(retries) != len(empty):
            raise BackendError(
                f"backend returned {len(retries)} retry samples for instruction "
                f"{item.id}, expected {len(empty)}"
            )
        for slot, sample in zip(empty, retries):
            blocks[slot] = mask_eos(
                sample.token_ids, sample.hidden, backend.eos_token_id
            )[1]
    reasons: list[str] = []
    vectors: list[np.ndarray] = []
    for j, block in enumerate(blocks):
        if block.shape[1] == 0:
            reasons.append(f"answer {j}: empty generation after retry")
            continue
        vector = pool_states(block).astype(np.float32)
        if vector.shape[0] != backend.hidden_size:
            raise ExportError(
                f"dimension drift: instruction {item.id} answer {j} pooled to "
                f"{vector.shape[0]} dims, expected {backend.hidden_size}"
            )
        if not np.isfinite(vector).all():
            reasons.append(f"answer {j}: non-finite pooled state")
        elif float(np.linalg.norm(vector.astype(np.float64))) <= NORM_FLOOR:
            reasons.append(f"answer {j}: pooled state norm below {NORM_FLOOR}")
        else:
            vectors.append(vector)
    if reasons:
        return None, reasons
    return np.stack(vectors), []


def run_extraction(
    pool_path: str | os.PathLike[str],
    cfg: ExtractionConfig,
    out_dir: str | os.PathLike[str],
    *,
    permissive: bool = False,
    backend=None,
    encoder=None,
) -> dict[str, object]:
    """Extract a pool into bundles; returns a summary of what was written."""
    items = read_pool(pool_path)
    if backend is None:
        backend = load_backend(cfg)
    window = resolve_layer_window(cfg.layer_window, backend.depth)
    if encoder is None:
        encoder = load_encoder(cfg.semantic_encoder)

    degenerate: dict[int, str] = {}
    candidates: list[tuple[PoolItem, np.ndarray]] = []
    for item in items:
        vectors, reasons = _pool_answers(item, backend, window, cfg)
        if reasons:
            degenerate[item.id] = "; ".join(reasons)
        else:
            candidates.append((item, vectors))

    semantic_rows = encoder.encode([item.text for item, _ in candidates])
    if semantic_rows.shape != (len(candidates), encoder.dim):
        raise ExportError(
            f"semantic encoder produced shape {semantic_rows.shape}, expected "
            f"({len(candidates)}, {encoder.dim})"
        )
    survivors: list[tuple[PoolItem, np.ndarray, np.ndarray]] = []
    for (item, vectors), row in zip(candidates, semantic_rows):
        if not np.isfinite(row).all():
            degenerate[item.id] = "semantic encoding is non-finite"
        elif float(np.linalg.norm(row.astype(np.float64))) <= NORM_FLOOR:
            degenerate[item.id] = "semantic encoding has zero norm"
        else:
            survivors.append((item, vectors, row))

    if degenerate and not permissive:
        ids = sorted(degenerate)
        shown = ", ".join(str(i) for i in ids[:20])
        if len(ids) > 20:
            shown += ", ..."
        raise ExportError(
            f"{len(ids)} degenerate instruction(s) (ids {shown}); "
            f"rerun with --permissive to export the remainder"
        )
    if not survivors:
        raise ExportError("no instructions survived extraction")

    os.makedirs(out_dir, exist_ok=True)
    answers = np.stack([vectors for _, vectors, _ in survivors])
    semantic = np.stack([row for _, _, row in survivors])[:, np.newaxis, :]
    adge.write_bundle(os.path.join(out_dir, ANSWERS_NAME), adge.KIND_ANSWERS, answers)
    adge.write_bundle(
        os.path.join(out_dir, SEMANTIC_NAME), adge.KIND_SEMANTIC, semantic
    )
    _write_report(os.path.join(out_dir, REPORT_NAME), degenerate)

    metadata = {
        "K": cfg.k,
        "answer_dim": backend.hidden_size,
        "batch_size": cfg.batch_size,
        "hidden_state_variant": backend.variant,
        "items_degenerate": len(degenerate),
        "items_exported": len(survivors),
        "items_in_pool": len(items),
        "layer_window": list(window),
        "max_new_tokens": cfg.max_new_tokens,
        "model": backend.name,
        "model_depth": backend.depth,
        "seed": cfg.seed,
        "semantic_dim": encoder.dim,
        "semantic_encoder": encoder.name,
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
    }
    _write_json(os.path.join(out_dir, METADATA_NAME), metadata)

    return {
        "items": len(items),
        "exported": len(survivors),
        "degenerate": len(degenerate),
        "answers_bundle": os.path.join(os.fspath(out_dir), ANSWERS_NAME),
        "semantic_bundle": os.path.join(os.fspath(out_dir), SEMANTIC_NAME),
        "report": os.path.join(os.fspath(out_dir), REPORT_NAME),
        "metadata": os.path.join(os.fspath(out_dir), METADATA_NAME),
    }


def _write_report(path: str, degenerate: dict[int, str]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for item_id in sorted(degenerate):
                line = json.dumps(
                    {"id": item_id, "reason": degenerate[item_id]},
                    sort_keys=True,
                    separators=(",", ":"),
                )
                fh.write(line + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def _write_json(path: str, doc: dict[str, object]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
