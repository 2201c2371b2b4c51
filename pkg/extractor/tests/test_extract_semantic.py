"""Semantic encoders: hashing determinism and transformer mean pooling."""

from __future__ import annotations

import numpy as np
import pytest

from adg_extract import ExtractConfigError, HashingEncoder, HfEncoder, load_encoder


def test_hashing_is_deterministic_across_instances():
    texts = ["Explain tides.", "Write a haiku about rust."]
    a = HashingEncoder(32).encode(texts)
    b = HashingEncoder(32).encode(texts)
    assert np.array_equal(a, b)
    assert a.dtype == np.float32


def test_hashing_rows_are_unit_norm():
    rows = HashingEncoder(48).encode(["one", "two sentences here", "three?"])
    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    assert np.allclose(norms, 1.0, rtol=0, atol=1e-6)


@pytest.mark.parametrize(
    "text",
    ["x", " ", "   ", "🌊", "a\nb", "word " * 200],
)
def test_hashing_never_zero_for_non_empty_text(text):
    rows = HashingEncoder(16).encode([text])
    assert np.isfinite(rows).all()
    assert np.linalg.norm(rows[0]) > 0.5


def test_hashing_dimension_respected():
    assert HashingEncoder(7).encode(["abc"]).shape == (1, 7)
    assert HashingEncoder(7).encode([]).shape == (0, 7)


def test_hashing_separates_texts():
    rows = HashingEncoder(64).encode(["completely different", "unrelated words here"])
    assert not np.allclose(rows[0], rows[1])


def test_hashing_cancellation_falls_back_to_basis_vector():
    # At p=1 the two trigrams of "ad" hash to opposite signs and cancel
    # exactly; without the fallback normalization would divide by zero.
    rows = HashingEncoder(1).encode(["ad"])
    assert np.isfinite(rows).all()
    assert rows[0].tolist() == [1.0]


def test_hashing_dim_validation():
    with pytest.raises(ExtractConfigError, match="integer >= 1"):
        HashingEncoder(0)


def test_load_encoder_identifiers():
    enc = load_encoder("hashing:64")
    assert (enc.dim, enc.name) == (64, "hashing:64")
    with pytest.raises(ExtractConfigError, match="hashing:<p>"):
        load_encoder("hashing:x")
    with pytest.raises(ExtractConfigError, match="integer >= 1"):
        load_encoder("hashing:0")
    with pytest.raises(ExtractConfigError, match="missing the model path"):
        load_encoder("hf:")
    with pytest.raises(ExtractConfigError, match="unknown semantic encoder"):
        load_encoder("bogus")


def test_hf_encoder_on_local_model(tiny_model_dir):
    encoder = load_encoder(f"hf:{tiny_model_dir}")
    assert isinstance(encoder, HfEncoder)
    assert encoder.dim == 32
    rows = encoder.encode(["Explain tides.", "Another instruction."])
    again = encoder.encode(["Explain tides.", "Another instruction."])
    assert rows.shape == (2, 32)
    assert rows.dtype == np.float32
    assert np.isfinite(rows).all()
    assert np.linalg.norm(rows, axis=1).min() > 0
    assert np.array_equal(rows, again)
    assert not np.allclose(rows[0], rows[1])
