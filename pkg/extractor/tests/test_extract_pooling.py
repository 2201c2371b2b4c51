"""Token/layer pooling math and end-of-sequence masking."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adg_extract import DegenerateSampleError, ExtractError, mask_eos, pool_states


def test_single_token_single_layer_is_identity():
    vec = np.array([1.5, -2.0, 0.25], dtype=np.float32)
    pooled = pool_states(vec.reshape(1, 1, 3))
    assert pooled.dtype == np.float64
    assert np.array_equal(pooled, vec.astype(np.float64))


def test_two_layers_one_token_average():
    u = np.array([2.0, 0.0, -4.0])
    v = np.array([0.0, 1.0, 2.0])
    pooled = pool_states(np.stack([u, v])[:, np.newaxis, :])
    assert np.allclose(pooled, (u + v) / 2.0, rtol=0, atol=1e-15)


def test_matches_independent_double_loop():
    rng = np.random.default_rng(7)
    block = rng.normal(size=(4, 3, 6))
    pooled = pool_states(block)
    layers, tokens, dim = block.shape
    expected = np.zeros(dim)
    for layer in range(layers):
        layer_mean = np.zeros(dim)
        for token in range(tokens):
            layer_mean += block[layer, token]
        expected += layer_mean / tokens
    expected /= layers
    assert np.allclose(pooled, expected, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=1, max_value=8),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_permutation_invariance(layers, tokens, dim, seed):
    rng = np.random.default_rng(seed)
    block = rng.normal(size=(layers, tokens, dim))
    baseline = pool_states(block)
    layer_perm = rng.permutation(layers)
    token_perm = rng.permutation(tokens)
    shuffled = block[layer_perm][:, token_perm, :]
    assert np.allclose(pool_states(shuffled), baseline, rtol=0, atol=1e-12)


def test_zero_tokens_degenerate():
    with pytest.raises(DegenerateSampleError, match="zero tokens"):
        pool_states(np.zeros((2, 0, 4)))


def test_zero_layers_rejected():
    with pytest.raises(ExtractError, match="zero layers"):
        pool_states(np.zeros((0, 3, 4)))


def test_wrong_rank_rejected():
    with pytest.raises(ExtractError, match=r"\(layers, tokens, dim\)"):
        pool_states(np.zeros((3, 4)))


def test_mask_eos_drops_every_eos_position():
    hidden = np.arange(2 * 4 * 3, dtype=np.float64).reshape(2, 4, 3)
    ids, kept = mask_eos([5, 0, 7, 0], hidden, eos_token_id=0)
    assert ids == (5, 7)
    assert kept.shape == (2, 2, 3)
    assert np.array_equal(kept, hidden[:, [0, 2], :])


def test_mask_eos_none_keeps_all():
    hidden = np.ones((1, 3, 2))
    ids, kept = mask_eos([0, 1, 0], hidden, eos_token_id=None)
    assert ids == (0, 1, 0)
    assert kept.shape == (1, 3, 2)


def test_mask_eos_without_match_keeps_all():
    hidden = np.ones((1, 2, 2))
    ids, kept = mask_eos([4, 5], hidden, eos_token_id=9)
    assert ids == (4, 5)
    assert np.array_equal(kept, hidden)


def test_mask_eos_can_empty_a_sample():
    hidden = np.ones((2, 1, 3))
    ids, kept = mask_eos([9], hidden, eos_token_id=9)
    assert ids == ()
    assert kept.shape == (2, 0, 3)
    with pytest.raises(DegenerateSampleError):
        pool_states(kept)


def test_mask_eos_length_mismatch():
    with pytest.raises(ExtractError, match="token count mismatch"):
        mask_eos([1, 2, 3], np.ones((1, 2, 2)), eos_token_id=0)


def test_mask_eos_rank_check():
    with pytest.raises(ExtractError, match=r"\(layers, tokens, dim\)"):
        mask_eos([1], np.ones((2, 2)), eos_token_id=0)
