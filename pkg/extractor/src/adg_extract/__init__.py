"""adg-extract: answer and semantic embedding extraction for instruction pools.

Samples K stochastic answers per instruction from a local causal language
model, pools generated-token hidden states over a layer window into one
vector per answer, encodes each instruction with a frozen sentence encoder,
and exports both as positional float32 embedding bundles ready for
divergence scoring and budgeted selection.
"""

from .adge import KIND_ANSWERS, KIND_SEMANTIC, encode_header, write_bundle
from .backends import AnswerSample, HfBackend, StubBackend, derive_seed, load_backend
from .config import (
    ExtractionConfig,
    config_echo,
    config_from_dict,
    load_config,
    resolve_layer_window,
)
from .errors import (
    BackendError,
    DegenerateSampleError,
    ExportError,
    ExtractConfigError,
    ExtractError,
    PoolError,
)
from .export import (
    ANSWERS_NAME,
    METADATA_NAME,
    NORM_FLOOR,
    REPORT_NAME,
    SEMANTIC_NAME,
    run_extraction,
)
from .pool import PoolItem, read_pool
from .pooling import mask_eos, pool_states
from .semantic import HashingEncoder, HfEncoder, load_encoder

__version__ = "0.1.0"

__all__ = [
    "ANSWERS_NAME",
    "AnswerSample",
    "BackendError",
    "DegenerateSampleError",
    "ExportError",
    "ExtractConfigError",
    "ExtractError",
    "ExtractionConfig",
    "HashingEncoder",
    "HfBackend",
    "HfEncoder",
    "KIND_ANSWERS",
    "KIND_SEMANTIC",
    "METADATA_NAME",
    "NORM_FLOOR",
    "PoolError",
    "PoolItem",
    "REPORT_NAME",
    "SEMANTIC_NAME",
    "StubBackend",
    "config_echo",
    "config_from_dict",
    "derive_seed",
    "encode_header",
    "load_backend",
    "load_config",
    "load_encoder",
    "mask_eos",
    "pool_states",
    "read_pool",
    "resolve_layer_window",
    "run_extraction",
    "write_bundle",
    "__version__",
]
