"""End-to-end orchestration: score -> bin -> select, plus the run report.

The pipeline consumes a strict UTF-8 JSON config (unknown keys are errors),
reads the answers and semantic bundles, writes score records, a selection
manifest, a plain-text selected-ids file, and a run report carrying the
config echo, stage timings, and score distribution summaries.

Every data artifact is byte-identical across reruns and thread counts; the
run report is identical except for its wall-clock "timings" block.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import binning, bundle, scoring
from .errors import AdgError, ConfigError, ConsistencyError, DataError

SCORES_NAME = "scores.jsonl"
MANIFEST_NAME = "selection_manifest.jsonl"
SELECTED_IDS_NAME = "selected_ids.txt"
REPORT_NAME = "run_report.json"
SCORE_ERRORS_NAME = "score_errors.jsonl"

SEED_ENV_VAR = "ADG_SEED"
_MASK64 = (1 << 64) - 1

_TOP_KEYS = frozenset(
    [
        "lambda",
        "bins",
        "budget",
        "seed",
        "segment",
        "paths",
        "K",
        "temperature",
        "top_p",
        "max_new_tokens",
        "layer_window",
        "threads",
        "permissive",
        "global_segment",
    ]
)
_PATH_KEYS = ("answers_bundle", "semantic_bundle", "output_dir")


@dataclass(frozen=True)
class PipelineConfig:
    answers_bundle: str
    semantic_bundle: str
    output_dir: str
    fusion_weight: float = 0.4
    bins: int = 1000
    budget: int = 10000
    seed: int = 0
    segment: str = "top"
    global_segment: bool = False
    threads: int = 1
    permissive: bool = False
    # sampling parameters echoed into the run report; recorded, not used here
    echo_k: int = 5
    echo_temperature: float = 1.4
    echo_top_p: float = 0.9
    echo_max_new_tokens: int = 180
    echo_layer_window: object = "last:4"


def resolve_seed(explicit: int | None, *, env=None) -> int:
    """Explicit seed if given, else the ADG_SEED environment variable, else 0."""
    if explicit is not None:
        if isinstance(explicit, bool) or not isinstance(explicit, int) or not (
            0 <= explicit <= _MASK64
        ):
            raise ConfigError(
                f"seed must be an unsigned 64-bit integer, got {explicit!r}"
            )
        return explicit
    environ = os.environ if env is None else env
    raw = environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        seed = int(raw, 10)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
    if not 0 <= seed <= _MASK64:
        raise ConfigError(f"{SEED_ENV_VAR} out of unsigned 64-bit range: {seed}")
    return seed


def _require(doc: dict, key: str, kinds, what: str, *, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"config field {what} is required")
        return default
    val = doc[key]
    if kinds is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"config field {what} must be a boolean, got {val!r}")
        return val
    if kinds is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"config field {what} must be an integer, got {val!r}")
        return val
    if kinds is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"config field {what} must be a number, got {val!r}")
        val = float(val)
        if not math.isfinite(val):
            raise ConfigError(f"config field {what} must be finite")
        return val
    if kinds is str:
        if not isinstance(val, str):
            raise ConfigError(f"config field {what} must be a string, got {val!r}")
        return val
    raise AssertionError(f"unhandled kind {kinds!r}")


def config_from_dict(doc: dict, *, env=None) -> PipelineConfig:
    """Build and validate a PipelineConfig from a parsed JSON object."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    paths = doc.get("paths")
    if paths is None:
        raise ConfigError("config field paths is required")
    if not isinstance(paths, dict):
        raise ConfigError("config field paths must be an object")
    unknown = sorted(set(paths) - set(_PATH_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys under paths: {unknown}")
    resolved_paths = {
        key: _require(paths, key, str, f"paths.{key}", required=True)
        for key in _PATH_KEYS
    }

    fusion_weight = _require(doc, "lambda", float, "lambda", default=0.4)
    if not 0.0 <= fusion_weight <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {fusion_weight!r}")
    bins = _require(doc, "bins", int, "bins", default=1000)
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    budget = _require(doc, "budget", int, "budget", default=10000)
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    seed = resolve_seed(_require(doc, "seed", int, "seed", default=None), env=env)
    segment = _require(doc, "segment", str, "segment", default="top")
    if segment not in binning.SEGMENTS:
        raise ConfigError(
            f"segment must be one of {binning.SEGMENTS}, got {segment!r}"
        )
    threads = _require(doc, "threads", int, "threads", default=1)
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    permissive = _require(doc, "permissive", bool, "permissive", default=False)
    global_segment = _require(doc, "global_segment", bool, "global_segment", default=False)

    echo_k = _require(doc, "K", int, "K", default=5)
    if echo_k < 2:
        raise ConfigError(f"K must be >= 2, got {echo_k}")
    echo_temperature = _require(doc, "temperature", float, "temperature", default=1.4)
    if echo_temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {echo_temperature}")
    echo_top_p = _require(doc, "top_p", float, "top_p", default=0.9)
    if not 0.0 < echo_top_p <= 1.0:
        raise ConfigError(f"top_p must be in (0, 1], got {echo_top_p}")
    echo_max_new_tokens = _require(doc, "max_new_tokens", int, "max_new_tokens", default=180)
    if echo_max_new_tokens < 1:
        raise ConfigError(f"max_new_tokens must be >= 1, got {echo_max_new_tokens}")
    echo_layer_window = doc.get("layer_window", "last:4")
    if not isinstance(echo_layer_window, str):
        if not (
            isinstance(echo_layer_window, list)
            and len(echo_layer_window) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in echo_layer_window)
        ):
            raise ConfigError(
                "layer_window must be a string or a [start, end] integer pair, "
                f"got {echo_layer_window!r}"
            )
        echo_layer_window = list(echo_layer_window)

    return PipelineConfig(
        answers_bundle=resolved_paths["answers_bundle"],
        semantic_bundle=resolved_paths["semantic_bundle"],
        output_dir=resolved_paths["output_dir"],
        fusion_weight=fusion_weight,
        bins=bins,
        budget=budget,
        seed=seed,
        segment=segment,
        global_segment=global_segment,
        threads=threads,
        permissive=permissive,
        echo_k=echo_k,
        echo_temperature=echo_temperature,
        echo_top_p=echo_top_p,
        echo_max_new_tokens=echo_max_new_tokens,
        echo_layer_window=echo_layer_window,
    )


def load_config(path: str, *, env=None) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc, env=env)


def config_echo(cfg: PipelineConfig) -> dict:
    """The resolved configuration as it appears in the run report."""
    return {
        "lambda": cfg.fusion_weight,
        "bins": cfg.bins,
        "budget": cfg.budget,
        "seed": cfg.seed,
        "segment": cfg.segment,
        "global_segment": cfg.global_segment,
        "threads": cfg.threads,
        "permissive": cfg.permissive,
        "paths": {
            "answers_bundle": cfg.answers_bundle,
            "semantic_bundle": cfg.semantic_bundle,
            "output_dir": cfg.output_dir,
        },
        "K": cfg.echo_k,
        "temperature": cfg.echo_temperature,
        "top_p": cfg.echo_top_p,
        "max_new_tokens": cfg.echo_max_new_tokens,
        "layer_window": cfg.echo_layer_window,
    }


def with_overrides(cfg: PipelineConfig, *, threads: int | None = None) -> PipelineConfig:
    if threads is None:
        return cfg
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    return replace(cfg, threads=threads)


def _distribution(values: np.ndarray) -> dict:
    deciles = np.percentile(values, np.arange(10, 100, 10), method="linear")
    return {
        "min": float(values.min()),
        "max": float(values.max()),
        "mean": float(values.mean()),
        "deciles": [float(v) for v in deciles],
    }


class _Stage:
    """Context that prefixes any pipeline error with its stage name."""

    def __init__(self, name: str):
        self.name = name
        self.started = 0.0
        self.elapsed = 0.0

    def __enter__(self) -> "_Stage":
        self.started = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self.started
        if exc is not None and isinstance(exc, AdgError):
            raise type(exc)(f"{self.name} stage: {exc}") from exc
        return False


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run score -> bin -> select and write the full output set.

    Returns the run report (also written to run_report.json).
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    t_start = time.perf_counter()
    score_cfg = scoring.ScoreConfig(fusion_weight=cfg.fusion_weight)

    with _Stage("score") as score_stage:
        with bundle.read_bundle(cfg.answers_bundle) as answers:
            item_count = answers.item_count
            records, failures = scoring.score_pool(
                answers,
                score_cfg,
                threads=cfg.threads,
                permissive=cfg.permissive,
            )
        bundle.write_score_records(os.path.join(cfg.output_dir, SCORES_NAME), records)
        if cfg.permissive:
            _write_failures(os.path.join(cfg.output_dir, SCORE_ERRORS_NAME), failures)
        if not records:
            raise DataError("no instructions survived scoring")

    with _Stage("bin") as bin_stage:
        with bundle.read_bundle(cfg.semantic_bundle) as semantic:
            if semantic.item_count != item_count:
                raise ConsistencyError(
                    f"answers bundle has {item_count} items but semantic bundle "
                    f"has {semantic.item_count}"
                )
            vectors = np.asarray(
                semantic.block(0, semantic.item_count), dtype=np.float64
            )[:, 0, :]
        if len(records) != item_count:
            survivors = np.fromiter(
                (r.id for r in records), dtype=np.int64, count=len(records)
            )
            vectors = vectors[survivors]
        assignment = binning.kmeans_fit(
            vectors, binning.KMeansConfig(bins=cfg.bins, seed=cfg.seed)
        )

    with _Stage("select") as select_stage:
        sizes = np.bincount(assignment.assignment, minlength=cfg.bins)
        quotas = binning.allocate_quotas(sizes, cfg.budget)
        manifest = binning.binwise_select(
            records,
            assignment,
            quotas,
            cfg.segment,
            fusion_weight=cfg.fusion_weight,
            global_segment=cfg.global_segment,
        )
        bundle.write_manifest(os.path.join(cfg.output_dir, MANIFEST_NAME), manifest)
        bundle.write_selected_ids(
            os.path.join(cfg.output_dir, SELECTED_IDS_NAME), manifest.selected_ids()
        )

    report = {
        "config": config_echo(cfg),
        "counts": {
            "items": item_count,
            "scored": len(records),
            "failed": len(failures),
            "selected": manifest.summary.budget,
        },
        "score_distribution": {
            "dispersion": _distribution(
                np.fromiter((r.dispersion for r in records), dtype=np.float64)
            ),
            "anisotropy": _distribution(
                np.fromiter((r.anisotropy for r in records), dtype=np.float64)
            ),
            "score": _distribution(
                np.fromiter((r.score for r in records), dtype=np.float64)
            ),
        },
        "prng": binning.PRNG_ID,
        "timings": {
            "score_s": score_stage.elapsed,
            "bin_s": bin_stage.elapsed,
            "select_s": select_stage.elapsed,
            "total_s": time.perf_counter() - t_start,
        },
    }
    report_path = os.path.join(cfg.output_dir, REPORT_NAME)
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return report


def _write_failures(path: str, failures: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in failures:
            fh.write(json.dumps(item, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
