"""Command-line interface.

Subcommands:
  score     score an answers bundle into divergence records (JSONL)
  select    bin a scored pool and select a fixed-budget subset
  pipeline  run score -> bin -> select from a JSON config
  synth     generate labeled synthetic answer/semantic bundles
  verify    run the built-in correctness checks

Exit codes: 0 success, 1 runtime failure (bad data, solver failure),
2 usage or configuration error. Failures print a single machine-readable
JSON object to stderr: {"error": <type>, "message": <text>}.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import binning, bundle, pipeline, scoring, synth, verify
from .errors import AdgError, ConfigError


def _print_error(exc: AdgError) -> None:
    line = json.dumps(
        {"error": type(exc).__name__, "message": str(exc)},
        sort_keys=True,
        separators=(",", ":"),
    )
    print(line, file=sys.stderr)


def _add_lambda(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--lambda",
        dest="fusion_weight",
        type=float,
        default=0.4,
        metavar="WEIGHT",
        help="fusion weight on anisotropy, in [0, 1] (default 0.4)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adg",
        description="Answer-divergence scoring and bin-quota subset selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score an answers bundle")
    p_score.add_argument("--answers", required=True, help="answers bundle (.adge)")
    p_score.add_argument("--out", required=True, help="output score records (.jsonl)")
    _add_lambda(p_score)
    p_score.add_argument("--threads", type=int, default=1)
    p_score.add_argument(
        "--permissive",
        action="store_true",
        help="skip unscoreable items instead of failing; log them to stderr",
    )
    p_score.set_defaults(func=cmd_score)

    p_select = sub.add_parser("select", help="bin scored items and select a subset")
    p_select.add_argument("--scores", required=True, help="score records (.jsonl)")
    p_select.add_argument("--semantic", required=True, help="semantic bundle (.adge)")
    p_select.add_argument("--out-dir", required=True)
    p_select.add_argument("--bins", type=int, default=1000)
    p_select.add_argument("--budget", type=int, default=10000)
    p_select.add_argument(
        "--seed", type=int, default=None, help="bin seed (default: $ADG_SEED or 0)"
    )
    p_select.add_argument("--segment", choices=binning.SEGMENTS, default="top")
    _add_lambda(p_select)
    p_select.add_argument(
        "--global-segment",
        action="store_true",
        help="take the rank segment on the pool-wide ordering instead of per bin",
    )
    p_select.set_defaults(func=cmd_select)

    p_pipe = sub.add_parser("pipeline", help="run score -> bin -> select from a config")
    p_pipe.add_argument("--config", required=True, help="pipeline config (.json)")
    p_pipe.add_argument(
        "--threads", type=int, default=None, help="override the config thread count"
    )
    p_pipe.set_defaults(func=cmd_pipeline)

    p_synth = sub.add_parser("synth", help="generate synthetic labeled bundles")
    p_synth.add_argument(
        "--scenario",
        required=True,
        help=f"one of {', '.join(synth.SCENARIOS)}",
    )
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--items", type=int, default=32)
    p_synth.add_argument("--k", type=int, default=5, help="answers per item")
    p_synth.add_argument("--d", type=int, default=16, help="answer embedding width")
    p_synth.add_argument("--semantic-dim", type=int, default=16)
    p_synth.set_defaults(func=cmd_synth)

    p_verify = sub.add_parser("verify", help="run the built-in correctness checks")
    p_verify.set_defaults(func=cmd_verify)

    return parser


def cmd_score(args: argparse.Namespace) -> int:
    cfg = scoring.ScoreConfig(fusion_weight=args.fusion_weight)
    if args.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {args.threads}")
    with bundle.read_bundle(args.answers) as reader:
        records, failures = scoring.score_pool(
            reader, cfg, threads=args.threads, permissive=args.permissive
        )
    bundle.write_score_records(args.out, records)
    for item in failures:
        print(
            json.dumps(item, sort_keys=True, separators=(",", ":")), file=sys.stderr
        )
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    fusion_weight = scoring.ScoreConfig(fusion_weight=args.fusion_weight).fusion_weight
    seed = pipeline.resolve_seed(args.seed)
    records = bundle.read_score_records(args.scores)
    if not records:
        raise ConfigError(f"score file {args.scores} holds no records")
    with bundle.read_bundle(args.semantic) as reader:
        item_count = reader.item_count
        ids = np.fromiter((r.id for r in records), dtype=np.int64, count=len(records))
        if int(ids[-1]) >= item_count:
            raise ConfigError(
                f"score id {int(ids[-1])} is out of range for a semantic bundle "
                f"of {item_count} items"
            )
        vectors = np.asarray(reader.block(0, item_count), dtype=np.float64)[:, 0, :]
    if len(records) != item_count:
        vectors = vectors[ids]

    assignment = binning.kmeans_fit(
        vectors, binning.KMeansConfig(bins=args.bins, seed=seed)
    )
    sizes = np.bincount(assignment.assignment, minlength=args.bins)
    quotas = binning.allocate_quotas(sizes, args.budget)
    manifest = binning.binwise_select(
        records,
        assignment,
        quotas,
        args.segment,
        fusion_weight=fusion_weight,
        global_segment=args.global_segment,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    bundle.write_manifest(
        os.path.join(args.out_dir, pipeline.MANIFEST_NAME), manifest
    )
    bundle.write_selected_ids(
        os.path.join(args.out_dir, pipeline.SELECTED_IDS_NAME),
        manifest.selected_ids(),
    )
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = pipeline.load_config(args.config)
    cfg = pipeline.with_overrides(cfg, threads=args.threads)
    pipeline.run_pipeline(cfg)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    scenario = synth.QuadrantScenario(
        name=args.scenario,
        k=args.k,
        d=args.d,
        items=args.items,
        semantic_dim=args.semantic_dim,
    )
    answers = synth.generate_answers(scenario, args.seed)
    semantic = synth.generate_semantic(scenario, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    bundle.write_bundle(
        os.path.join(args.out_dir, "answers.adge"), bundle.KIND_ANSWERS, answers
    )
    bundle.write_bundle(
        os.path.join(args.out_dir, "semantic.adge"), bundle.KIND_SEMANTIC, semantic
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results = verify.run_all()
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        if not ok:
            failed += 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return int(args.func(args))
    except ConfigError as exc:
        _print_error(exc)
        return 2
    except AdgError as exc:
        _print_error(exc)
        return 1
    except OSError as exc:
        line = json.dumps(
            {"error": "OSError", "message": str(exc)},
            sort_keys=True,
            separators=(",", ":"),
        )
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
