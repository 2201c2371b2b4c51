"""Command-line interface.

    adg-extract --pool pool.jsonl --config extract.json --out-dir DIR
                [--permissive]

Reads an instruction pool, samples K answers per instruction from the
configured local model, and writes answers.adge, semantic.adge,
degenerate-report.jsonl, and extraction-metadata.json into the target
directory. On success a one-line JSON summary goes to stdout.

Exit codes: 0 success, 1 runtime failure (bad pool, model failure,
degenerate items in strict mode), 2 usage or configuration error.
Failures print a single machine-readable JSON object to stderr:
{"error": <type>, "message": <text>}.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import ExtractConfigError, ExtractError
from .export import run_extraction


def _print_error(exc: Exception) -> None:
    line = json.dumps(
        {"error": type(exc).__name__, "message": str(exc)},
        sort_keys=True,
        separators=(",", ":"),
    )
    print(line, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adg-extract",
        description=(
            "Sample K answers per instruction from a local language model "
            "and export answer/semantic embedding bundles."
        ),
    )
    parser.add_argument(
        "--pool", required=True, help="instruction pool (JSON lines: id, text)"
    )
    parser.add_argument("--config", required=True, help="extraction config JSON")
    parser.add_argument(
        "--out-dir", required=True, help="directory for the exported bundles"
    )
    parser.add_argument(
        "--permissive",
        action="store_true",
        help="skip degenerate instructions instead of failing the run",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        summary = run_extraction(
            args.pool, cfg, args.out_dir, permissive=args.permissive
        )
    except ExtractConfigError as exc:
        _print_error(exc)
        return 2
    except ExtractError as exc:
        _print_error(exc)
        return 1
    except OSError as exc:
        _print_error(exc)
        return 1
    print(json.dumps(summary, sort_keys=True, separators=(",", ":")))
    return 0


if __name__ == "__main__":
    sys.exit(main())
