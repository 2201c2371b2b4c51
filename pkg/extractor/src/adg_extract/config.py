"""Extraction configuration: parsing, validation, and layer-window resolution.

The config file is a flat JSON object:

    {
      "model": "/path/to/local/model",   required; "stub" / "stub:<depth>:<dim>"
                                         selects the deterministic test backend
      "K": 5,                            answers sampled per instruction, >= 2
      "temperature": 1.4,                sampling temperature, > 0
      "top_p": 0.9,                      nucleus mass, in (0, 1]
      "max_new_tokens": 180,             generation cap per answer, >= 1
      "layer_window": "last:4",          or [lo, hi], 1-based inclusive block
                                         indices; resolved against model depth
      "semantic_encoder": "hashing:256", or "hf:/path/to/local/encoder"
      "batch_size": 8,                   sequences per forward pass, >= 1
      "seed": 0                          unsigned 64-bit generation seed
    }

Unknown keys are rejected so typos cannot silently disable an option.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields

from .errors import ExtractConfigError

DEFAULT_K = 5
DEFAULT_TEMPERATURE = 1.4
DEFAULT_TOP_P = 0.9
DEFAULT_MAX_NEW_TOKENS = 180
DEFAULT_LAYER_WINDOW = "last:4"
DEFAULT_SEMANTIC_ENCODER = "hashing:256"
DEFAULT_BATCH_SIZE = 8

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class ExtractionConfig:
    """Validated knobs for one extraction run."""

    model: str
    k: int = DEFAULT_K
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    layer_window: str | tuple[int, int] = DEFAULT_LAYER_WINDOW
    semantic_encoder: str = DEFAULT_SEMANTIC_ENCODER
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.model, str) or not self.model:
            raise ExtractConfigError("model must be a non-empty string")
        _check_int("K", self.k, minimum=2)
        _check_real("temperature", self.temperature, exclusive_minimum=0.0)
        _check_real("top_p", self.top_p, exclusive_minimum=0.0, maximum=1.0)
        _check_int("max_new_tokens", self.max_new_tokens, minimum=1)
        window = _parse_layer_window(self.layer_window)
        object.__setattr__(self, "layer_window", window)
        if not isinstance(self.semantic_encoder, str) or not self.semantic_encoder:
            raise ExtractConfigError("semantic_encoder must be a non-empty string")
        _check_int("batch_size", self.batch_size, minimum=1)
        _check_int("seed", self.seed, minimum=0, maximum=_U64_MAX)
        if isinstance(self.temperature, int):
            object.__setattr__(self, "temperature", float(self.temperature))
        if isinstance(self.top_p, int):
            object.__setattr__(self, "top_p", float(self.top_p))


def _check_int(name: str, value: object, *, minimum: int, maximum: int | None = None) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ExtractConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum or (maximum is not None and value > maximum):
        bound = f">= {minimum}" if maximum is None else f"in [{minimum}, {maximum}]"
        raise ExtractConfigError(f"{name} must be {bound}, got {value}")


def _check_real(
    name: str,
    value: object,
    *,
    exclusive_minimum: float,
    maximum: float | None = None,
) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ExtractConfigError(f"{name} must be a real number, got {value!r}")
    x = float(value)
    if not math.isfinite(x) or not x > exclusive_minimum:
        raise ExtractConfigError(f"{name} must be > {exclusive_minimum}, got {value}")
    if maximum is not None and x > maximum:
        raise ExtractConfigError(f"{name} must be <= {maximum}, got {value}")


def _parse_layer_window(window: object) -> str | tuple[int, int]:
    """Validate the window's form; depth bounds are checked at resolve time."""
    if isinstance(window, str):
        prefix, _, count = window.partition(":")
        if prefix != "last" or not count.isdigit() or int(count) < 1:
            raise ExtractConfigError(
                f'layer_window string must look like "last:<n>" with n >= 1, '
                f"got {window!r}"
            )
        return window
    if isinstance(window, (list, tuple)):
        if len(window) != 2 or any(
            isinstance(v, bool) or not isinstance(v, int) for v in window
        ):
            raise ExtractConfigError(
                f"layer_window must be a [lo, hi] pair of integers, got {window!r}"
            )
        lo, hi = int(window[0]), int(window[1])
        if not 1 <= lo <= hi:
            raise ExtractConfigError(
                f"layer_window bounds must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"
            )
        return (lo, hi)
    raise ExtractConfigError(
        f'layer_window must be "last:<n>" or a [lo, hi] pair, got {window!r}'
    )


def resolve_layer_window(window: str | tuple[int, int], depth: int) -> tuple[int, int]:
    """Turn a window selector into concrete 1-based inclusive block indices.

    Index l addresses the output of transformer block l (the embedding
    output is not addressable). The window must lie within [1, depth].
    """
    window = _parse_layer_window(window)
    if isinstance(window, str):
        count = int(window.partition(":")[2])
        lo, hi = depth - count + 1, depth
    else:
        lo, hi = window
    if lo < 1 or hi > depth:
        raise ExtractConfigError(
            f"layer window [{lo}, {hi}] exceeds model depth {depth}"
        )
    return lo, hi


_FIELD_KEYS = {
    "model": "model",
    "K": "k",
    "temperature": "temperature",
    "top_p": "top_p",
    "max_new_tokens": "max_new_tokens",
    "layer_window": "layer_window",
    "semantic_encoder": "semantic_encoder",
    "batch_size": "batch_size",
    "seed": "seed",
}


def config_from_dict(doc: object) -> ExtractionConfig:
    if not isinstance(doc, dict):
        raise ExtractConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_FIELD_KEYS))
    if unknown:
        raise ExtractConfigError(f"unknown config keys: {unknown}")
    if "model" not in doc:
        raise ExtractConfigError("config field model is required")
    kwargs = {_FIELD_KEYS[key]: value for key, value in doc.items()}
    return ExtractionConfig(**kwargs)


def load_config(path: str | os.PathLike[str]) -> ExtractionConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ExtractConfigError(f"cannot read config {os.fspath(path)}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ExtractConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def config_echo(cfg: ExtractionConfig) -> dict[str, object]:
    """Config as a JSON-ready dict using the on-disk key spelling."""
    doc: dict[str, object] = {}
    for field in fields(cfg):
        key = next(k for k, attr in _FIELD_KEYS.items() if attr == field.name)
        value = getattr(cfg, field.name)
        doc[key] = list(value) if isinstance(value, tuple) else value
    return doc
