"""Answer-divergence scoring and bin-quota subset selection.

Score each instruction by the geometry of its sampled answer embeddings
(dispersion of the mean, anisotropy of the centered spectrum), bin the pool
by semantic k-means, and select a fixed-budget subset with exact
proportional quotas. All outputs are byte-deterministic for a given seed.
"""

from .binning import (
    PRNG_ID,
    SEGMENTS,
    BinAssignment,
    KMeansConfig,
    QuotaTable,
    SplitMix64,
    allocate_quotas,
    binwise_select,
    kmeans_fit,
)
from .bundle import (
    KIND_ANSWERS,
    KIND_SEMANTIC,
    BundleHeader,
    BundleReader,
    BundleWriter,
    DivergenceRecord,
    InstructionRecord,
    ManifestLine,
    ManifestSummary,
    SelectionManifest,
    read_bundle,
    read_instructions,
    read_manifest,
    read_score_records,
    read_selected_ids,
    write_bundle,
    write_instructions,
    write_manifest,
    write_score_records,
    write_selected_ids,
)
from .errors import (
    AdgError,
    BundleFormatError,
    ConfigError,
    ConsistencyError,
    DataError,
    DegenerateAnswerError,
    DomainError,
    InfeasibleBudgetError,
    PayloadLengthError,
    PsdViolationError,
    SolverError,
)
from .geometry import AnswerMatrix, CenteredGram, centered_gram, normalize_answers
from .pipeline import PipelineConfig, config_from_dict, load_config, run_pipeline
from .scoring import (
    EigenSpectrum,
    ScoreConfig,
    anisotropy,
    dispersion,
    eig_symmetric,
    fuse,
    score_instruction,
    score_pool,
)
from .synth import QuadrantScenario, generate_answers, generate_semantic

__version__ = "0.1.0"

__all__ = [
    "AdgError",
    "AnswerMatrix",
    "BinAssignment",
    "BundleFormatError",
    "BundleHeader",
    "BundleReader",
    "BundleWriter",
    "CenteredGram",
    "ConfigError",
    "ConsistencyError",
    "DataError",
    "DegenerateAnswerError",
    "DivergenceRecord",
    "DomainError",
    "EigenSpectrum",
    "InfeasibleBudgetError",
    "InstructionRecord",
    "KIND_ANSWERS",
    "KIND_SEMANTIC",
    "KMeansConfig",
    "ManifestLine",
    "ManifestSummary",
    "PRNG_ID",
    "PayloadLengthError",
    "PipelineConfig",
    "PsdViolationError",
    "QuadrantScenario",
    "QuotaTable",
    "SEGMENTS",
    "ScoreConfig",
    "SelectionManifest",
    "SolverError",
    "SplitMix64",
    "allocate_quotas",
    "anisotropy",
    "binwise_select",
    "centered_gram",
    "config_from_dict",
    "dispersion",
    "eig_symmetric",
    "fuse",
    "generate_answers",
    "generate_semantic",
    "kmeans_fit",
    "load_config",
    "normalize_answers",
    "read_bundle",
    "read_instructions",
    "read_manifest",
    "read_score_records",
    "read_selected_ids",
    "run_pipeline",
    "score_instruction",
    "score_pool",
    "write_bundle",
    "write_instructions",
    "write_manifest",
    "write_score_records",
    "write_selected_ids",
    "__version__",
]
