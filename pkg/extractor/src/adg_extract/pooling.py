"""Hidden-state pooling: one vector per sampled answer.

An answer's hidden states form a (layers, tokens, dim) block covering the
generated tokens only (prompt positions are excluded by the backend). The
pooled embedding is the mean over tokens within each layer, then the mean
over layers — unchanged by permuting layers or tokens.

End-of-sequence tokens are stripped before pooling (:func:`mask_eos`):
their states mark where decoding stopped rather than what was said, and a
decode that produced nothing but an end-of-sequence marker counts as empty.
Pooling runs at double precision regardless of the capture dtype; callers
cast to float32 when writing bundles.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateSampleError, ExtractError


def mask_eos(
    token_ids: Sequence[int],
    hidden: np.ndarray,
    eos_token_id: int | None,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Drop every end-of-sequence position from a (layers, tokens, dim) block.

    Token order is preserved. ``eos_token_id=None`` (tokenizers without an
    end-of-sequence marker) keeps everything. The returned hidden block may
    have zero tokens; callers decide whether that makes the sample empty.
    """
    hidden = np.asarray(hidden)
    if hidden.ndim != 3:
        raise ExtractError(
            f"hidden states must be (layers, tokens, dim), got shape {hidden.shape}"
        )
    ids = tuple(int(t) for t in token_ids)
    if len(ids) != hidden.shape[1]:
        raise ExtractError(
            f"token count mismatch: {len(ids)} token ids for "
            f"{hidden.shape[1]} hidden positions"
        )
    if eos_token_id is None:
        return ids, hidden
    keep = [pos for pos, token in enumerate(ids) if token != eos_token_id]
    return tuple(ids[pos] for pos in keep), hidden[:, keep, :]


def pool_states(hidden: np.ndarray) -> np.ndarray:
    """Mean over tokens within each layer, then mean over layers.

    Accepts a (layers, tokens, dim) block with at least one layer and one
    token; returns a float64 (dim,) vector. Zero tokens means the sample
    has nothing to pool and raises :class:`DegenerateSampleError`.
    """
    hidden = np.asarray(hidden)
    if hidden.ndim != 3:
        raise ExtractError(
            f"hidden states must be (layers, tokens, dim), got shape {hidden.shape}"
        )
    layers, tokens, _ = hidden.shape
    if layers < 1:
        raise ExtractError("hidden states cover zero layers")
    if tokens < 1:
        raise DegenerateSampleError("cannot pool an answer with zero tokens")
    per_layer = np.mean(hidden, axis=1, dtype=np.float64)
    return np.mean(per_layer, axis=0, dtype=np.float64)
