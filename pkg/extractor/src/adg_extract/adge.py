"""Minimal writer for version-1 ADGE embedding bundles.

Layout: 4-byte magic ``ADGE``, little-endian u32 version (1), little-endian
u64 header length, a compact sorted-key JSON header, then the payload as
little-endian float32 in C order. The header carries exactly six keys:
kind ("answers" or "semantic"), item_count, vectors_per_item, dim, dtype
("f32le"), and id_table_present (false — ids are positional).

This package only ever produces bundles, so only the writer lives here;
consumers validate with their own readers against the same byte layout.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ExportError

MAGIC = b"ADGE"
VERSION = 1
KIND_ANSWERS = "answers"
KIND_SEMANTIC = "semantic"

_PREAMBLE = struct.Struct("<4sIQ")  # magic, version, header_length


def encode_header(kind: str, item_count: int, vectors_per_item: int, dim: int) -> bytes:
    if kind not in (KIND_ANSWERS, KIND_SEMANTIC):
        raise ExportError(f"unknown bundle kind {kind!r}")
    if item_count < 1:
        raise ExportError(f"item_count out of range: {item_count!r}")
    if kind == KIND_ANSWERS and vectors_per_item < 2:
        raise ExportError(
            f"answers bundles need vectors_per_item >= 2, got {vectors_per_item}"
        )
    if kind == KIND_SEMANTIC and vectors_per_item != 1:
        raise ExportError(
            f"semantic bundles carry exactly 1 vector per item, got {vectors_per_item}"
        )
    if dim < 1:
        raise ExportError(f"dim out of range: {dim!r}")
    doc = {
        "kind": kind,
        "item_count": item_count,
        "vectors_per_item": vectors_per_item,
        "dim": dim,
        "dtype": "f32le",
        "id_table_present": False,
    }
    header = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, VERSION, len(header)) + header


def write_bundle(path: str | os.PathLike[str], kind: str, vectors: np.ndarray) -> None:
    """Write an (item_count, vectors_per_item, dim) float32 array as a bundle."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 3:
        raise ExportError(
            f"bundle payload must be (items, vectors, dim), got shape {vectors.shape}"
        )
    if vectors.dtype != np.float32:
        raise ExportError(f"bundle payload must be float32, got {vectors.dtype}")
    if not np.isfinite(vectors).all():
        raise ExportError("bundle payload contains non-finite values")
    items, per_item, dim = vectors.shape
    header = encode_header(kind, items, per_item, dim)
    payload = np.ascontiguousarray(vectors, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes(order="C"))
    except OSError as exc:
        raise ExportError(f"cannot write {os.fspath(path)}: {exc}") from exc
