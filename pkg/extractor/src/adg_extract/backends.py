"""Generation backends: sample K answers and capture hidden states.

A backend exposes

    name            model identifier echoed into extraction metadata
    variant         which hidden-state convention the captured blocks follow
    depth           transformer block count (layer windows resolve against it)
    hidden_size     width of one hidden-state vector
    eos_token_id    end-of-sequence id, or None if the tokenizer has none
    generate(text, *, instruction_id, count, attempt, window, config)
                    -> list of count AnswerSample

Each :class:`AnswerSample` covers the generated tokens only — prompt
positions are excluded at capture — with hidden states for every block in
the requested window, shaped (window layers, generated tokens, dim).
End-of-sequence positions are still present; callers strip them with
:func:`adg_extract.pooling.mask_eos`.

Seeds derive from (config seed, instruction id, attempt), so results do not
depend on pool order or on which subset of a pool is extracted. Identical
runs on the same machine and library versions reproduce token ids exactly;
bitwise reproducibility across hardware is best-effort, as with any
floating-point sampler.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ExtractionConfig
from .errors import BackendError, ExtractConfigError

STUB_PREFIX = "stub"
_STUB_DEPTH = 6
_STUB_HIDDEN = 16
_STUB_VOCAB = 512


@dataclass(frozen=True)
class AnswerSample:
    """One sampled answer: generated token ids and their hidden states."""

    token_ids: tuple[int, ...]
    hidden: np.ndarray  # (window layers, generated tokens, dim)


def derive_seed(seed: int, instruction_id: int, attempt: int) -> int:
    """Mix run seed, instruction id, and attempt into a 63-bit seed."""
    digest = hashlib.blake2b(
        f"{seed}:{instruction_id}:{attempt}".encode("ascii"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def _text_digest(text: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little"
    )


class StubBackend:
    """Deterministic model-free backend for tests and plumbing checks.

    Procedurally it emits a few pseudo-random content tokens, a trailing
    end-of-sequence token when the budget allows, and Gaussian hidden
    states — every quantity a pure function of (seed, instruction id,
    attempt, sample index, text). A ``script`` overrides specific
    instructions: ``script[id]`` is a list of attempts, each a list of
    :class:`AnswerSample` returned verbatim, which lets tests stage empty
    generations, non-finite states, or exact known matrices.
    """

    variant = "stub-synthetic-states"

    def __init__(
        self,
        *,
        depth: int = _STUB_DEPTH,
        hidden_size: int = _STUB_HIDDEN,
        eos_token_id: int | None = 0,
        script: dict[int, list[list[AnswerSample]]] | None = None,
        name: str = STUB_PREFIX,
    ) -> None:
        if depth < 1 or hidden_size < 1:
            raise ExtractConfigError(
                f"stub backend needs depth >= 1 and hidden_size >= 1, "
                f"got {depth} and {hidden_size}"
            )
        self.name = name
        self.depth = depth
        self.hidden_size = hidden_size
        self.eos_token_id = eos_token_id
        self.script = script or {}

    def generate(
        self,
        text: str,
        *,
        instruction_id: int,
        count: int,
        attempt: int,
        window: tuple[int, int],
        config: ExtractionConfig,
    ) -> list[AnswerSample]:
        if instruction_id in self.script:
            attempts = self.script[instruction_id]
            staged = attempts[min(attempt, len(attempts) - 1)]
            if len(staged) < count:
                raise BackendError(
                    f"stub script for instruction {instruction_id} stages "
                    f"{len(staged)} samples, {count} requested"
                )
            return list(staged[:count])
        lo, hi = window
        layers = hi - lo + 1
        samples = []
        for j in range(count):
            rng = np.random.default_rng(
                (config.seed, instruction_id, attempt, j, _text_digest(text))
            )
            budget = config.max_new_tokens
            content = int(rng.integers(1, min(6, budget) + 1))
            ids = [int(t) for t in rng.integers(1, _STUB_VOCAB, size=content)]
            if self.eos_token_id is not None and content < budget:
                ids.append(self.eos_token_id)
            hidden = rng.standard_normal((layers, len(ids), self.hidden_size))
            samples.append(AnswerSample(token_ids=tuple(ids), hidden=hidden))
        return samples


class HfBackend:
    """Causal language model backend over local transformer weights.

    Answers are sampled with ``model.generate`` (nucleus sampling at the
    configured temperature), then each sampled sequence is re-forwarded
    once with hidden-state output to capture the representation of every
    generated token in context. Captured entries are block outputs as the
    model reports them; the final block's entry has passed the model's
    final normalization layer, which is what the variant string records.
    """

    variant = "hf-block-outputs-post-final-norm"

    def __init__(self, model_path: str) -> None:
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - torch is an extra
            raise BackendError(
                f"transformer backends need torch and transformers installed: {exc}"
            ) from exc
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(
                model_path, local_files_only=True
            )
            self.model = AutoModelForCausalLM.from_pretrained(
                model_path, local_files_only=True
            )
        except Exception as exc:
            raise BackendError(f"cannot load model {model_path!r}: {exc}") from exc
        self.model.eval()
        self.name = model_path
        depth = getattr(self.model.config, "num_hidden_layers", None)
        hidden_size = getattr(self.model.config, "hidden_size", None)
        if not isinstance(depth, int) or not isinstance(hidden_size, int):
            raise BackendError(
                f"model {model_path!r} does not report num_hidden_layers/hidden_size"
            )
        self.depth = depth
        self.hidden_size = hidden_size
        self.eos_token_id = self.tokenizer.eos_token_id

    def generate(
        self,
        text: str,
        *,
        instruction_id: int,
        count: int,
        attempt: int,
        window: tuple[int, int],
        config: ExtractionConfig,
    ) -> list[AnswerSample]:
        torch = self._torch
        encoded = self.tokenizer(text, return_tensors="pt")
        prompt_len = int(encoded["input_ids"].shape[1])
        if prompt_len == 0:
            raise BackendError(
                f"instruction {instruction_id}: prompt tokenized to zero tokens"
            )
        pad_token_id = self.tokenizer.pad_token_id
        if pad_token_id is None:
            pad_token_id = self.eos_token_id if self.eos_token_id is not None else 0
        torch.manual_seed(derive_seed(config.seed, instruction_id, attempt))
        rows: list[Sequence[int]] = []
        remaining = count
        while remaining > 0:
            chunk = min(remaining, config.batch_size)
            try:
                with torch.no_grad():
                    out = self.model.generate(
                        input_ids=encoded["input_ids"],
                        attention_mask=encoded["attention_mask"],
                        do_sample=True,
                        temperature=config.temperature,
                        top_p=config.top_p,
                        max_new_tokens=config.max_new_tokens,
                        num_return_sequences=chunk,
                        pad_token_id=pad_token_id,
                        eos_token_id=self.eos_token_id,
                    )
            except Exception as exc:
                raise BackendError(
                    f"generation failed for instruction {instruction_id}: {exc}"
                ) from exc
            rows.extend(row.tolist() for row in out)
            remaining -= chunk
        lo, hi = window
        samples = []
        for row in rows:
            generated = [int(t) for t in row[prompt_len:]]
            # A sequence ends at its first end-of-sequence token; whatever
            # follows is batch padding. Keep the marker itself — the pooling
            # mask owns the decision to exclude it.
            if self.eos_token_id is not None and self.eos_token_id in generated:
                generated = generated[: generated.index(self.eos_token_id) + 1]
            prompt_ids = [int(t) for t in row[:prompt_len]]
            input_ids = torch.tensor([prompt_ids + generated], dtype=torch.long)
            with torch.no_grad():
                forward = self.model(input_ids=input_ids, output_hidden_states=True)
            states = forward.hidden_states
            stacked = torch.stack(
                [states[layer][0, prompt_len:, :] for layer in range(lo, hi + 1)]
            )
            hidden = stacked.to(torch.float32).cpu().numpy()
            samples.append(AnswerSample(token_ids=tuple(generated), hidden=hidden))
        return samples


def load_backend(cfg: ExtractionConfig) -> StubBackend | HfBackend:
    """Build the backend named by ``cfg.model``.

    ``"stub"`` or ``"stub:<depth>:<hidden_size>"`` selects the deterministic
    stub; anything else is treated as a local transformer model path.
    """
    identifier = cfg.model
    if identifier == STUB_PREFIX or identifier.startswith(STUB_PREFIX + ":"):
        if identifier == STUB_PREFIX:
            return StubBackend()
        parts = identifier.split(":")
        if len(parts) != 3 or not parts[1].isdigit() or not parts[2].isdigit():
            raise ExtractConfigError(
                f'stub model identifier must be "stub" or '
                f'"stub:<depth>:<hidden_size>", got {identifier!r}'
            )
        return StubBackend(
            depth=int(parts[1]), hidden_size=int(parts[2]), name=identifier
        )
    return HfBackend(identifier)
