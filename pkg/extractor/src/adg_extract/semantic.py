"""Frozen sentence encoders for the semantic bundle.

Two encoder families, selected by identifier string:

``hashing:<p>``
    Signed character-trigram feature hashing into p buckets, L2-normalized.
    Pure arithmetic on the text bytes — no weights, identical on every
    machine — which keeps pipelines reproducible end to end without model
    downloads. Texts are padded with STX/ETX sentinels so even one-character
    inputs produce a trigram, and a deterministic basis vector stands in on
    the (astronomically rare) exact sign cancellation, so the encoding of a
    non-empty text is never the zero vector.

``hf:<path>``
    Masked mean over the last hidden layer of a local transformer encoder;
    the output width is whatever the model reports.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import BackendError, ExtractConfigError

HASHING_PREFIX = "hashing:"
HF_PREFIX = "hf:"

_PAD_START = "\x02"
_PAD_END = "\x03"


class HashingEncoder:
    def __init__(self, dim: int) -> None:
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            raise ExtractConfigError(
                f"hashing encoder dimension must be an integer >= 1, got {dim!r}"
            )
        self.dim = dim
        self.name = f"hashing:{dim}"

    def _encode_one(self, text: str) -> np.ndarray:
        padded = _PAD_START + text + _PAD_END
        vec = np.zeros(self.dim, dtype=np.float64)
        for start in range(len(padded) - 2):
            gram = padded[start : start + 3]
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            sign = 1.0 if h & 1 == 0 else -1.0
            vec[(h >> 1) % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            fallback = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            vec[int.from_bytes(fallback, "little") % self.dim] = 1.0
            return vec
        return vec / norm

    def encode(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        rows = np.stack([self._encode_one(text) for text in texts])
        return rows.astype(np.float32)


class HfEncoder:
    def __init__(self, model_path: str) -> None:
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - torch is an extra
            raise BackendError(
                f"transformer encoders need torch and transformers installed: {exc}"
            ) from exc
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(
                model_path, local_files_only=True
            )
            self.model = AutoModel.from_pretrained(model_path, local_files_only=True)
        except Exception as exc:
            raise BackendError(f"cannot load encoder {model_path!r}: {exc}") from exc
        self.model.eval()
        dim = getattr(self.model.config, "hidden_size", None)
        if not isinstance(dim, int):
            raise BackendError(f"encoder {model_path!r} does not report hidden_size")
        self.dim = dim
        self.name = f"hf:{model_path}"
        self._max_length = getattr(self.model.config, "max_position_embeddings", 512)

    def encode(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        rows = []
        for text in texts:
            encoded = self.tokenizer(
                text,
                return_tensors="pt",
                truncation=True,
                max_length=self._max_length,
            )
            with torch.no_grad():
                out = self.model(**encoded)
            states = out.last_hidden_state[0]
            mask = encoded["attention_mask"][0].to(states.dtype).unsqueeze(-1)
            kept = float(mask.sum())
            if kept == 0.0:
                raise BackendError("encoder received a text with zero tokens")
            pooled = (states * mask).sum(dim=0) / kept
            rows.append(pooled.to(torch.float32).cpu().numpy())
        if not rows:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack(rows)


def load_encoder(identifier: str) -> HashingEncoder | HfEncoder:
    if identifier.startswith(HASHING_PREFIX):
        suffix = identifier[len(HASHING_PREFIX) :]
        if not suffix.isdigit():
            raise ExtractConfigError(
                f'hashing encoder must look like "hashing:<p>", got {identifier!r}'
            )
        return HashingEncoder(int(suffix))
    if identifier.startswith(HF_PREFIX):
        path = identifier[len(HF_PREFIX) :]
        if not path:
            raise ExtractConfigError("hf encoder is missing the model path")
        return HfEncoder(path)
    raise ExtractConfigError(
        f'unknown semantic encoder {identifier!r}; use "hashing:<p>" or "hf:<path>"'
    )
