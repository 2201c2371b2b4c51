"""The exporter's own bundle writer against the scoring engine's reader.

The two packages share no code — only the byte layout — so these tests are
the decoupling proof: files written here must be byte-identical to what the
consumer-side writer produces and must pass its strict reader.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from adg import bundle as consumer_bundle
from adg_extract import ExportError, encode_header, write_bundle


def test_answers_bundle_bytes_match_consumer_writer(tmp_path):
    rng = np.random.default_rng(5)
    data = rng.normal(size=(6, 3, 4)).astype(np.float32)
    ours = tmp_path / "ours.adge"
    theirs = tmp_path / "theirs.adge"
    write_bundle(ours, "answers", data)
    consumer_bundle.write_bundle(theirs, "answers", data)
    assert ours.read_bytes() == theirs.read_bytes()


def test_semantic_bundle_bytes_match_consumer_writer(tmp_path):
    rng = np.random.default_rng(6)
    data = rng.normal(size=(5, 1, 8)).astype(np.float32)
    ours = tmp_path / "ours.adge"
    theirs = tmp_path / "theirs.adge"
    write_bundle(ours, "semantic", data)
    consumer_bundle.write_bundle(theirs, "semantic", data)
    assert ours.read_bytes() == theirs.read_bytes()


def test_consumer_reader_round_trips_values(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.normal(size=(4, 5, 3)).astype(np.float32)
    path = tmp_path / "answers.adge"
    write_bundle(path, "answers", data)
    reader = consumer_bundle.BundleReader(path)
    assert reader.header.kind == "answers"
    assert reader.header.item_count == 4
    assert reader.header.vectors_per_item == 5
    assert reader.header.dim == 3
    for i in range(4):
        assert np.array_equal(reader.item(i), data[i])


def test_header_bytes_are_canonical(tmp_path):
    path = tmp_path / "b.adge"
    write_bundle(path, "semantic", np.ones((2, 1, 3), dtype=np.float32))
    raw = path.read_bytes()
    magic, version, header_len = struct.unpack_from("<4sIQ", raw, 0)
    assert magic == b"ADGE"
    assert version == 1
    header = raw[16 : 16 + header_len]
    expected = json.dumps(
        {
            "kind": "semantic",
            "item_count": 2,
            "vectors_per_item": 1,
            "dim": 3,
            "dtype": "f32le",
            "id_table_present": False,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    assert header == expected
    assert len(raw) == 16 + header_len + 2 * 1 * 3 * 4


@pytest.mark.parametrize(
    ("kind", "items", "per_item", "dim", "message"),
    [
        ("other", 1, 2, 3, "unknown bundle kind"),
        ("answers", 0, 2, 3, "item_count out of range"),
        ("answers", 1, 1, 3, "vectors_per_item >= 2"),
        ("semantic", 1, 2, 3, "exactly 1 vector per item"),
        ("answers", 1, 2, 0, "dim out of range"),
    ],
)
def test_header_invariants(kind, items, per_item, dim, message):
    with pytest.raises(ExportError, match=message):
        encode_header(kind, items, per_item, dim)


def test_writer_rejects_wrong_dtype(tmp_path):
    with pytest.raises(ExportError, match="must be float32"):
        write_bundle(tmp_path / "b.adge", "answers", np.ones((1, 2, 3)))


def test_writer_rejects_wrong_rank(tmp_path):
    with pytest.raises(ExportError, match=r"\(items, vectors, dim\)"):
        write_bundle(tmp_path / "b.adge", "answers", np.ones((2, 3), dtype=np.float32))


def test_writer_rejects_non_finite(tmp_path):
    data = np.ones((1, 2, 3), dtype=np.float32)
    data[0, 1, 2] = np.nan
    with pytest.raises(ExportError, match="non-finite"):
        write_bundle(tmp_path / "b.adge", "answers", data)


def test_writer_reports_unwritable_path(tmp_path):
    data = np.ones((1, 2, 3), dtype=np.float32)
    with pytest.raises(ExportError, match="cannot write"):
        write_bundle(tmp_path / "missing-dir" / "b.adge", "answers", data)
