"""Shared fixtures: a tiny local causal LM and pool-file helpers."""

from __future__ import annotations

import json

import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """Build and save a small randomly initialized GPT-2 with a byte-level
    tokenizer (256 byte tokens + one end-of-sequence token)."""
    torch = pytest.importorskip("torch")
    transformers = pytest.importorskip("transformers")
    from tokenizers.pre_tokenizers import ByteLevel

    target = tmp_path_factory.mktemp("tiny-model")
    config = transformers.GPT2Config(
        vocab_size=257,
        n_positions=512,
        n_embd=32,
        n_layer=6,
        n_head=4,
        bos_token_id=256,
        eos_token_id=256,
    )
    torch.manual_seed(0)
    model = transformers.GPT2LMHeadModel(config)
    model.save_pretrained(target)
    vocab = {ch: i for i, ch in enumerate(sorted(ByteLevel.alphabet()))}
    vocab["<|endoftext|>"] = 256
    tokenizer = transformers.GPT2Tokenizer(vocab=vocab, merges=[])
    tokenizer.save_pretrained(target)
    return str(target)


@pytest.fixture()
def write_pool(tmp_path):
    """Write texts as a dense-id pool file; returns the path."""

    def _write(texts, name="pool.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for i, text in enumerate(texts):
                fh.write(json.dumps({"id": i, "text": text}) + "\n")
        return str(path)

    return _write
