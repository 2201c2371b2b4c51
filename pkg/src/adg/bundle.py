"""On-disk interchange formats: vector bundles and line-oriented records.

Bundle layout (version 1), little-endian throughout:

    offset 0   magic            4 bytes, ASCII "ADGE"
    offset 4   version          u32, must be 1
    offset 8   header_length    u64, byte length of the JSON header
    offset 16  header           UTF-8 JSON object (compact, sorted keys)
    ...        payload          raw float32 values, row-major
                                (item, vector, component)

The JSON header carries exactly these keys:

    kind              "answers" (K >= 2 vectors per item) or
                      "semantic" (exactly 1 vector per item)
    item_count        number of items N (u64 range)
    vectors_per_item  vectors stored per item K (u32 range)
    dim               components per vector d (u32 range)
    dtype             must be "f32le"
    id_table_present  must be false; ids are implicit, dense, zero-based

Identical inputs produce byte-identical files: the header is serialized with
sorted keys and compact separators, and the payload is written in item order.

Record files are JSON-lines (UTF-8, LF). Real numbers are serialized with
%.17g so a write/read cycle reproduces the same IEEE doubles exactly.
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BundleFormatError,
    ConsistencyError,
    DataError,
    PayloadLengthError,
)

MAGIC = b"ADGE"
VERSION = 1
KIND_ANSWERS = "answers"
KIND_SEMANTIC = "semantic"
_KINDS = (KIND_ANSWERS, KIND_SEMANTIC)
_DTYPE = "f32le"
_HEADER_KEYS = frozenset(
    ["kind", "item_count", "vectors_per_item", "dim", "dtype", "id_table_present"]
)
_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1

_PREAMBLE = struct.Struct("<4sIQ")  # magic, version, header_length


def fmt_real(x: float) -> str:
    """Serialize a real number so the exact double round-trips through JSON."""
    return "%.17g" % float(x)


def _io_open(path, mode, **kwargs):
    """Open a file, converting filesystem failures into typed errors."""
    try:
        return open(path, mode, **kwargs)
    except OSError as exc:
        verb = "write" if ("w" in mode or "a" in mode) else "read"
        raise DataError(f"cannot {verb} {os.fspath(path)}: {exc}") from exc


# ---------------------------------------------------------------------------
# bundle header


@dataclass(frozen=True)
class BundleHeader:
    kind: str
    item_count: int
    vectors_per_item: int
    dim: int
    dtype: str = _DTYPE
    id_table_present: bool = False

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise BundleFormatError(f"unknown bundle kind {self.kind!r}")
        if not isinstance(self.item_count, int) or not (1 <= self.item_count <= _U64_MAX):
            raise BundleFormatError(f"item_count out of range: {self.item_count!r}")
        if not isinstance(self.vectors_per_item, int) or not (
            1 <= self.vectors_per_item <= _U32_MAX
        ):
            raise BundleFormatError(
                f"vectors_per_item out of range: {self.vectors_per_item!r}"
            )
        if not isinstance(self.dim, int) or not (1 <= self.dim <= _U32_MAX):
            raise BundleFormatError(f"dim out of range: {self.dim!r}")
        if self.kind == KIND_ANSWERS and self.vectors_per_item < 2:
            raise BundleFormatError(
                "answers bundles need vectors_per_item >= 2, got "
                f"{self.vectors_per_item}"
            )
        if self.kind == KIND_SEMANTIC and self.vectors_per_item != 1:
            raise BundleFormatError(
                "semantic bundles carry exactly 1 vector per item, got "
                f"{self.vectors_per_item}"
            )
        if self.dtype != _DTYPE:
            raise BundleFormatError(f"unsupported dtype {self.dtype!r}")
        if self.id_table_present is not False:
            raise BundleFormatError(
                "id_table_present must be false in version 1 (ids are implicit)"
            )

    def payload_bytes(self) -> int:
        return self.item_count * self.vectors_per_item * self.dim * 4

    def encode(self) -> bytes:
        self.validate()
        doc = {
            "kind": self.kind,
            "item_count": self.item_count,
            "vectors_per_item": self.vectors_per_item,
            "dim": self.dim,
            "dtype": self.dtype,
            "id_table_present": self.id_table_present,
        }
        header = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return _PREAMBLE.pack(MAGIC, VERSION, len(header)) + header


def _decode_header(raw: bytes) -> BundleHeader:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"bundle header is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BundleFormatError("bundle header must be a JSON object")
    keys = set(doc)
    if keys != _HEADER_KEYS:
        missing = sorted(_HEADER_KEYS - keys)
        unknown = sorted(keys - _HEADER_KEYS)
        parts = []
        if missing:
            parts.append(f"missing keys {missing}")
        if unknown:
            parts.append(f"unknown keys {unknown}")
        raise BundleFormatError("bundle header has " + " and ".join(parts))
    for key in ("item_count", "vectors_per_item", "dim"):
        if isinstance(doc[key], bool) or not isinstance(doc[key], int):
            raise BundleFormatError(f"bundle header field {key} must be an integer")
    if not isinstance(doc["kind"], str) or not isinstance(doc["dtype"], str):
        raise BundleFormatError("bundle header fields kind/dtype must be strings")
    if not isinstance(doc["id_table_present"], bool):
        raise BundleFormatError("bundle header field id_table_present must be a bool")
    header = BundleHeader(
        kind=doc["kind"],
        item_count=doc["item_count"],
        vectors_per_item=doc["vectors_per_item"],
        dim=doc["dim"],
        dtype=doc["dtype"],
        id_table_present=doc["id_table_present"],
    )
    header.validate()
    return header


# ---------------------------------------------------------------------------
# writing


class BundleWriter:
    """Streaming bundle writer: append item blocks, then close.

    Blocks are cast to float32; values must already be finite. close()
    verifies that exactly header.item_count items were appended.
    """

    def __init__(self, path: str | os.PathLike[str], header: BundleHeader):
        header.validate()
        self.path = os.fspath(path)
        self.header = header
        self._items_written = 0
        self._fh: io.BufferedWriter | None = _io_open(self.path, "wb")
        self._fh.write(header.encode())

    def append(self, block: np.ndarray) -> None:
        if self._fh is None:
            raise ConsistencyError("bundle writer is already closed")
        arr = np.asarray(block)
        k, d = self.header.vectors_per_item, self.header.dim
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3 or arr.shape[1] != k or arr.shape[2] != d:
            raise ConsistencyError(
                f"block shape {arr.shape} does not match (n, {k}, {d})"
            )
        if arr.shape[0] == 0:
            return
        if self._items_written + arr.shape[0] > self.header.item_count:
            raise ConsistencyError(
                f"bundle overflow: header declares {self.header.item_count} items"
            )
        finite = np.isfinite(arr)
        if not finite.all():
            bad = np.argwhere(~finite)[0]
            raise DataError(
                "non-finite value in item "
                f"{self._items_written + int(bad[0])}, vector {int(bad[1])}"
            )
        self._fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        self._items_written += arr.shape[0]

    def close(self) -> None:
        if self._fh is None:
            return
        fh, self._fh = self._fh, None
        fh.close()
        if self._items_written != self.header.item_count:
            raise ConsistencyError(
                f"bundle underflow: wrote {self._items_written} of "
                f"{self.header.item_count} declared items"
            )

    def __enter__(self) -> "BundleWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        elif self._fh is not None:
            self._fh.close()
            self._fh = None


def write_bundle(path: str | os.PathLike[str], kind: str, data: np.ndarray) -> BundleHeader:
    """Write a whole in-memory (N, K, d) array as one bundle."""
    arr = np.asarray(data)
    if arr.ndim == 2:  # (N, d) semantic convenience
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise ConsistencyError(f"bundle data must be (N, K, d), got shape {arr.shape}")
    header = BundleHeader(
        kind=kind,
        item_count=int(arr.shape[0]),
        vectors_per_item=int(arr.shape[1]),
        dim=int(arr.shape[2]),
    )
    with BundleWriter(path, header) as writer:
        writer.append(arr)
    return header


# ---------------------------------------------------------------------------
# reading


class BundleReader:
    """Memory-mapped bundle accessor: item(i) and block(start, stop) views.

    Opening validates the preamble, header, and total file length; it does not
    scan the payload. validate_payload() performs the full finite-value scan.
    """

    def __init__(self, path: str | os.PathLike[str]):
        self.path = os.fspath(path)
        try:
            size = os.path.getsize(self.path)
        except OSError as exc:
            raise DataError(f"cannot read {self.path}: {exc}") from exc
        with _io_open(self.path, "rb") as fh:
            pre = fh.read(_PREAMBLE.size)
            if len(pre) < _PREAMBLE.size:
                raise BundleFormatError("file too short for bundle preamble")
            magic, version, header_len = _PREAMBLE.unpack(pre)
            if magic != MAGIC:
                raise BundleFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
            if version != VERSION:
                raise BundleFormatError(f"unsupported bundle version {version}")
            if _PREAMBLE.size + header_len > size:
                raise BundleFormatError("declared header length exceeds file size")
            raw_header = fh.read(header_len)
        self.header = _decode_header(raw_header)
        self._offset = _PREAMBLE.size + header_len
        expected = self.header.payload_bytes()
        actual = size - self._offset
        if actual != expected:
            raise PayloadLengthError(
                f"payload is {actual} bytes but header implies {expected} "
                f"({self.header.item_count} x {self.header.vectors_per_item} "
                f"x {self.header.dim} float32)"
            )
        self._mm = np.memmap(
            self.path,
            dtype="<f4",
            mode="r",
            offset=self._offset,
            shape=(
                self.header.item_count,
                self.header.vectors_per_item,
                self.header.dim,
            ),
        )

    @property
    def item_count(self) -> int:
        return self.header.item_count

    @property
    def vectors_per_item(self) -> int:
        return self.header.vectors_per_item

    @property
    def dim(self) -> int:
        return self.header.dim

    @property
    def kind(self) -> str:
        return self.header.kind

    def item(self, i: int) -> np.ndarray:
        if not 0 <= i < self.header.item_count:
            raise IndexError(f"item {i} out of range [0, {self.header.item_count})")
        return self._mm[i]

    def block(self, start: int, stop: int) -> np.ndarray:
        if not (0 <= start <= stop <= self.header.item_count):
            raise IndexError(
                f"block [{start}, {stop}) out of range [0, {self.header.item_count}]"
            )
        return self._mm[start:stop]

    def validate_payload(self, chunk_items: int = 4096) -> None:
        """Scan the payload and reject the first non-finite item."""
        n = self.header.item_count
        for start in range(0, n, chunk_items):
            chunk = self._mm[start : min(start + chunk_items, n)]
            finite = np.isfinite(chunk)
            if not finite.all():
                bad = np.argwhere(~finite)[0]
                raise DataError(
                    f"non-finite value in item {start + int(bad[0])}, "
                    f"vector {int(bad[1])}"
                )

    def close(self) -> None:
        mm, self._mm = self._mm, None
        if mm is not None:
            del mm

    def __enter__(self) -> "BundleReader":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def read_bundle(path: str | os.PathLike[str]) -> BundleReader:
    """Open a bundle for memory-mapped access, validating header and length."""
    return BundleReader(path)


# ---------------------------------------------------------------------------
# score records


@dataclass(frozen=True)
class DivergenceRecord:
    id: int
    dispersion: float
    anisotropy: float
    score: float
    eigenvalues: tuple[float, ...]

    def to_line(self) -> str:
        eig = ",".join(fmt_real(g) for g in self.eigenvalues)
        return (
            f'{{"id":{self.id},"dispersion":{fmt_real(self.dispersion)},'
            f'"anisotropy":{fmt_real(self.anisotropy)},'
            f'"score":{fmt_real(self.score)},"eigenvalues":[{eig}]}}'
        )


def _require_real(doc: dict, key: str, where: str) -> float:
    val = doc.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise DataError(f"{where}: field {key} must be a number")
    val = float(val)
    if not math.isfinite(val):
        raise DataError(f"{where}: field {key} is not finite")
    return val


def _require_id(doc: dict, where: str) -> int:
    val = doc.get("id")
    if isinstance(val, bool) or not isinstance(val, int) or val < 0:
        raise DataError(f"{where}: field id must be a non-negative integer")
    return val


def write_score_records(
    path: str | os.PathLike[str], records: list[DivergenceRecord]
) -> None:
    _check_sorted_ids([r.id for r in records], "score records")
    with _io_open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_line())
            fh.write("\n")


def read_score_records(path: str | os.PathLike[str]) -> list[DivergenceRecord]:
    records: list[DivergenceRecord] = []
    keys = {"id", "dispersion", "anisotropy", "score", "eigenvalues"}
    with _io_open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"score records line {lineno}"
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict) or set(doc) != keys:
                raise DataError(f"{where}: expected exactly fields {sorted(keys)}")
            eig = doc["eigenvalues"]
            if not isinstance(eig, list) or not eig:
                raise DataError(f"{where}: eigenvalues must be a non-empty list")
            vals = []
            for g in eig:
                if isinstance(g, bool) or not isinstance(g, (int, float)):
                    raise DataError(f"{where}: eigenvalues must be numbers")
                g = float(g)
                if not math.isfinite(g):
                    raise DataError(f"{where}: eigenvalue is not finite")
                vals.append(g)
            records.append(
                DivergenceRecord(
                    id=_require_id(doc, where),
                    dispersion=_require_real(doc, "dispersion", where),
                    anisotropy=_require_real(doc, "anisotropy", where),
                    score=_require_real(doc, "score", where),
                    eigenvalues=tuple(vals),
                )
            )
    _check_sorted_ids([r.id for r in records], "score records")
    return records


def _check_sorted_ids(ids: list[int], what: str) -> None:
    for prev, cur in zip(ids, ids[1:]):
        if cur <= prev:
            raise DataError(f"{what}: ids must be strictly ascending (…{prev}, {cur}…)")


# ---------------------------------------------------------------------------
# selection manifest


@dataclass(frozen=True)
class ManifestLine:
    id: int
    bin: int
    score: float
    rank_in_bin: int
    selected: bool

    def to_line(self) -> str:
        sel = "true" if self.selected else "false"
        return (
            f'{{"id":{self.id},"bin":{self.bin},"score":{fmt_real(self.score)},'
            f'"rank_in_bin":{self.rank_in_bin},"selected":{sel}}}'
        )


@dataclass(frozen=True)
class ManifestSummary:
    budget: int
    bins: int
    seed: int
    fusion_weight: float
    segment: str
    segment_scope: str
    prng: str

    def to_line(self) -> str:
        return (
            f'{{"summary":{{"budget":{self.budget},"bins":{self.bins},'
            f'"seed":{self.seed},"lambda":{fmt_real(self.fusion_weight)},'
            f'"segment":"{self.segment}","segment_scope":"{self.segment_scope}",'
            f'"prng":"{self.prng}"}}}}'
        )


@dataclass(frozen=True)
class SelectionManifest:
    lines: list[ManifestLine] = field(default_factory=list)
    summary: ManifestSummary | None = None

    def selected_ids(self) -> list[int]:
        return [ln.id for ln in self.lines if ln.selected]


def write_manifest(path: str | os.PathLike[str], manifest: SelectionManifest) -> None:
    if manifest.summary is None:
        raise ConsistencyError("selection manifest is missing its summary footer")
    _check_sorted_ids([ln.id for ln in manifest.lines], "selection manifest")
    n_selected = sum(1 for ln in manifest.lines if ln.selected)
    if n_selected != manifest.summary.budget:
        raise ConsistencyError(
            f"manifest marks {n_selected} items selected but budget is "
            f"{manifest.summary.budget}"
        )
    with _io_open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ln in manifest.lines:
            fh.write(ln.to_line())
            fh.write("\n")
        fh.write(manifest.summary.to_line())
        fh.write("\n")


def read_manifest(path: str | os.PathLike[str]) -> SelectionManifest:
    lines: list[ManifestLine] = []
    summary: ManifestSummary | None = None
    line_keys = {"id", "bin", "score", "rank_in_bin", "selected"}
    summary_keys = {
        "budget",
        "bins",
        "seed",
        "lambda",
        "segment",
        "segment_scope",
        "prng",
    }
    with _io_open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            where = f"selection manifest line {lineno}"
            if summary is not None:
                raise DataError(f"{where}: content after summary footer")
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise DataError(f"{where}: expected a JSON object")
            if set(doc) == {"summary"}:
                body = doc["summary"]
                if not isinstance(body, dict) or set(body) != summary_keys:
                    raise DataError(
                        f"{where}: summary must carry exactly {sorted(summary_keys)}"
                    )
                for key in ("budget", "bins", "seed"):
                    if isinstance(body[key], bool) or not isinstance(body[key], int):
                        raise DataError(f"{where}: summary field {key} must be an int")
                if not isinstance(body["segment"], str) or not isinstance(
                    body["segment_scope"], str
                ) or not isinstance(body["prng"], str):
                    raise DataError(f"{where}: summary string field has wrong type")
                summary = ManifestSummary(
                    budget=body["budget"],
                    bins=body["bins"],
                    seed=body["seed"],
                    fusion_weight=_require_real(body, "lambda", where),
                    segment=body["segment"],
                    segment_scope=body["segment_scope"],
                    prng=body["prng"],
                )
                continue
            if set(doc) != line_keys:
                raise DataError(f"{where}: expected exactly fields {sorted(line_keys)}")
            for key in ("bin", "rank_in_bin"):
                if isinstance(doc[key], bool) or not isinstance(doc[key], int):
                    raise DataError(f"{where}: field {key} must be an integer")
            if not isinstance(doc["selected"], bool):
                raise DataError(f"{where}: field selected must be a bool")
            if doc["rank_in_bin"] < 1:
                raise DataError(f"{where}: rank_in_bin must be >= 1")
            lines.append(
                ManifestLine(
                    id=_require_id(doc, where),
                    bin=doc["bin"],
                    score=_require_real(doc, "score", where),
                    rank_in_bin=doc["rank_in_bin"],
                    selected=doc["selected"],
                )
            )
    if summary is None:
        raise DataError("selection manifest has no summary footer")
    manifest = SelectionManifest(lines=lines, summary=summary)
    _check_sorted_ids([ln.id for ln in lines], "selection manifest")
    n_selected = sum(1 for ln in lines if ln.selected)
    if n_selected != summary.budget:
        raise DataError(
            f"selection manifest marks {n_selected} items selected but budget is "
            f"{summary.budget}"
        )
    return manifest


# ---------------------------------------------------------------------------
# instruction records


@dataclass(frozen=True)
class InstructionRecord:
    id: int
    text: str
    metadata: dict[str, str] | None = None

    def to_line(self) -> str:
        parts = [f'"id":{self.id},"text":{json.dumps(self.text, ensure_ascii=False)}']
        if self.metadata is not None:
            meta = json.dumps(
                self.metadata, sort_keys=True, separators=(",", ":"), ensure_ascii=False
            )
            parts.append(f'"metadata":{meta}')
        return "{" + ",".join(parts) + "}"


def write_instructions(
    path: str | os.PathLike[str], records: list[InstructionRecord]
) -> None:
    _validate_instruction_ids(records)
    with _io_open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_line())
            fh.write("\n")


def read_instructions(path: str | os.PathLike[str]) -> list[InstructionRecord]:
    records: list[InstructionRecord] = []
    with _io_open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            where = f"instruction records line {lineno}"
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict) or not {"id", "text"} <= set(doc) <= {
                "id",
                "text",
                "metadata",
            }:
                raise DataError(f"{where}: expected fields id, text[, metadata]")
            if not isinstance(doc["text"], str) or not doc["text"]:
                raise DataError(f"{where}: text must be a non-empty string")
            metadata = doc.get("metadata")
            if metadata is not None:
                if not isinstance(metadata, dict) or not all(
                    isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
                ):
                    raise DataError(f"{where}: metadata must map strings to strings")
            records.append(
                InstructionRecord(
                    id=_require_id(doc, where), text=doc["text"], metadata=metadata
                )
            )
    _validate_instruction_ids(records)
    return records


def _validate_instruction_ids(records: list[InstructionRecord]) -> None:
    for pos, rec in enumerate(records):
        if rec.id != pos:
            raise DataError(
                f"instruction ids must be dense and zero-based: position {pos} "
                f"holds id {rec.id}"
            )


# ---------------------------------------------------------------------------
# selected-ids file


def write_selected_ids(path: str | os.PathLike[str], ids: list[int]) -> None:
    _check_sorted_ids(list(ids), "selected ids")
    with _io_open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in ids:
            fh.write(f"{i}\n")


def read_selected_ids(path: str | os.PathLike[str]) -> list[int]:
    ids: list[int] = []
    with _io_open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                ids.append(int(raw))
            except ValueError as exc:
                raise DataError(f"selected ids line {lineno}: not an integer") from exc
    _check_sorted_ids(ids, "selected ids")
    return ids
