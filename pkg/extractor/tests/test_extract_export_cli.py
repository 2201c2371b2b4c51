"""Export orchestration and the adg-extract command line."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from adg import bundle as consumer_bundle
from adg import cli as consumer_cli
from adg_extract import (
    AnswerSample,
    BackendError,
    ExportError,
    ExtractionConfig,
    StubBackend,
    cli,
    config_from_dict,
    mask_eos,
    pool_states,
    run_extraction,
)

CFG_DOC = {
    "model": "stub:6:16",
    "K": 3,
    "max_new_tokens": 20,
    "layer_window": "last:4",
    "semantic_encoder": "hashing:12",
    "batch_size": 2,
    "seed": 5,
}
WINDOW = (3, 6)
TEXTS = [f"Describe topic number {i} in one sentence." for i in range(6)]


def _cfg() -> ExtractionConfig:
    return config_from_dict(dict(CFG_DOC))


def _expected_vectors(item_id: int, text: str, cfg: ExtractionConfig) -> np.ndarray:
    """Recompute one instruction's (K, d) block the way export does."""
    backend = StubBackend()
    samples = backend.generate(
        text,
        instruction_id=item_id,
        count=cfg.k,
        attempt=0,
        window=WINDOW,
        config=cfg,
    )
    rows = []
    for sample in samples:
        _, kept = mask_eos(sample.token_ids, sample.hidden, backend.eos_token_id)
        rows.append(pool_states(kept).astype(np.float32))
    return np.stack(rows)


def _sample(hidden: np.ndarray, token_ids=None) -> AnswerSample:
    if token_ids is None:
        token_ids = tuple(range(1, hidden.shape[1] + 1))
    return AnswerSample(token_ids=tuple(token_ids), hidden=hidden)


def _good(rng: np.random.Generator) -> AnswerSample:
    return _sample(rng.normal(size=(4, 3, 16)))


EMPTY = AnswerSample(token_ids=(), hidden=np.zeros((4, 0, 16)))


def test_happy_path_outputs(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    out = tmp_path / "out"
    cfg = _cfg()
    summary = run_extraction(pool, cfg, out)
    assert summary["items"] == 6
    assert summary["exported"] == 6
    assert summary["degenerate"] == 0
    for key in ("answers_bundle", "semantic_bundle", "report", "metadata"):
        assert os.path.exists(summary[key])

    answers = consumer_bundle.BundleReader(out / "answers.adge")
    assert answers.header.kind == "answers"
    assert answers.header.item_count == 6
    assert answers.header.vectors_per_item == 3
    assert answers.header.dim == 16
    semantic = consumer_bundle.BundleReader(out / "semantic.adge")
    assert semantic.header.kind == "semantic"
    assert semantic.header.item_count == 6
    assert semantic.header.vectors_per_item == 1
    assert semantic.header.dim == 12

    for i in (0, 3, 5):
        assert np.array_equal(answers.item(i), _expected_vectors(i, TEXTS[i], cfg))

    assert (out / "degenerate-report.jsonl").read_text() == ""
    metadata = json.loads((out / "extraction-metadata.json").read_text())
    assert metadata == {
        "K": 3,
        "answer_dim": 16,
        "batch_size": 2,
        "hidden_state_variant": "stub-synthetic-states",
        "items_degenerate": 0,
        "items_exported": 6,
        "items_in_pool": 6,
        "layer_window": [3, 6],
        "max_new_tokens": 20,
        "model": "stub:6:16",
        "model_depth": 6,
        "seed": 5,
        "semantic_dim": 12,
        "semantic_encoder": "hashing:12",
        "temperature": 1.4,
        "top_p": 0.9,
    }


def test_rerun_is_byte_identical(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    run_extraction(pool, _cfg(), tmp_path / "a")
    run_extraction(pool, _cfg(), tmp_path / "b")
    for name in (
        "answers.adge",
        "semantic.adge",
        "degenerate-report.jsonl",
        "extraction-metadata.json",
    ):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes()


def test_strict_mode_fails_and_writes_nothing(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(0)
    backend = StubBackend(
        script={1: [[_good(rng), EMPTY, _good(rng)], [EMPTY]]}
    )
    out = tmp_path / "out"
    with pytest.raises(ExportError, match=r"1 degenerate instruction\(s\) \(ids 1\)"):
        run_extraction(pool, _cfg(), out, backend=backend)
    assert not out.exists()


def test_permissive_skips_and_reports(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(0)
    backend = StubBackend(
        script={1: [[_good(rng), EMPTY, _good(rng)], [EMPTY]]}
    )
    out = tmp_path / "out"
    cfg = _cfg()
    summary = run_extraction(pool, cfg, out, backend=backend, permissive=True)
    assert (summary["items"], summary["exported"], summary["degenerate"]) == (6, 5, 1)
    lines = (out / "degenerate-report.jsonl").read_text().splitlines()
    assert [json.loads(line) for line in lines] == [
        {"id": 1, "reason": "answer 1: empty generation after retry"}
    ]
    answers = consumer_bundle.BundleReader(out / "answers.adge")
    assert answers.header.item_count == 5
    # Exported rows preserve pool order: row 1 is pool id 2.
    assert np.array_equal(answers.item(1), _expected_vectors(2, TEXTS[2], cfg))
    metadata = json.loads((out / "extraction-metadata.json").read_text())
    assert metadata["items_exported"] == 5
    assert metadata["items_degenerate"] == 1


def test_retry_recovers_an_empty_sample(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(1)
    good = [_good(rng), _good(rng)]
    recovered = _sample(rng.normal(size=(4, 2, 16)), token_ids=(7, 9))
    backend = StubBackend(script={0: [[EMPTY, *good], [recovered]]})
    out = tmp_path / "out"
    summary = run_extraction(pool, _cfg(), out, backend=backend)
    assert (summary["exported"], summary["degenerate"]) == (6, 0)
    assert (out / "degenerate-report.jsonl").read_text() == ""
    answers = consumer_bundle.BundleReader(out / "answers.adge")
    expected = pool_states(recovered.hidden).astype(np.float32)
    assert np.array_equal(answers.item(0)[0], expected)


def test_non_finite_pooled_state_is_degenerate(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(2)
    poisoned = rng.normal(size=(4, 2, 16))
    poisoned[1, 0, 3] = np.nan
    backend = StubBackend(
        script={2: [[_sample(poisoned), _good(rng), _good(rng)]]}
    )
    out = tmp_path / "out"
    summary = run_extraction(pool, _cfg(), out, backend=backend, permissive=True)
    assert summary["degenerate"] == 1
    report = json.loads((out / "degenerate-report.jsonl").read_text())
    assert report == {"id": 2, "reason": "answer 0: non-finite pooled state"}


def test_zero_norm_pooled_state_is_degenerate(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(3)
    backend = StubBackend(
        script={2: [[_good(rng), _sample(np.zeros((4, 2, 16))), _good(rng)]]}
    )
    out = tmp_path / "out"
    run_extraction(pool, _cfg(), out, backend=backend, permissive=True)
    report = json.loads((out / "degenerate-report.jsonl").read_text())
    assert report["id"] == 2
    assert report["reason"].startswith("answer 1: pooled state norm below")


def test_multiple_reasons_joined(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(4)
    poisoned = rng.normal(size=(4, 2, 16))
    poisoned[0, 0, 0] = np.inf
    backend = StubBackend(
        script={4: [[EMPTY, _sample(poisoned), _good(rng)], [EMPTY]]}
    )
    out = tmp_path / "out"
    run_extraction(pool, _cfg(), out, backend=backend, permissive=True)
    report = json.loads((out / "degenerate-report.jsonl").read_text())
    assert report["reason"] == (
        "answer 0: empty generation after retry; answer 1: non-finite pooled state"
    )


def test_dimension_drift_is_always_fatal(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    rng = np.random.default_rng(5)
    drifted = _sample(rng.normal(size=(4, 2, 17)))
    backend = StubBackend(script={1: [[drifted, _good(rng), _good(rng)]]})
    with pytest.raises(ExportError, match="dimension drift: instruction 1 answer 0"):
        run_extraction(
            pool, _cfg(), tmp_path / "out", backend=backend, permissive=True
        )


def test_all_degenerate_leaves_nothing_to_export(write_pool, tmp_path):
    pool = write_pool(TEXTS[:2])
    backend = StubBackend(
        script={0: [[EMPTY, EMPTY, EMPTY]], 1: [[EMPTY, EMPTY, EMPTY]]}
    )
    with pytest.raises(ExportError, match="no instructions survived extraction"):
        run_extraction(
            pool, _cfg(), tmp_path / "out", backend=backend, permissive=True
        )


class _FakeEncoder:
    def __init__(self, rows_by_text):
        self.dim = 4
        self.name = "fake:4"
        self._rows = rows_by_text

    def encode(self, texts):
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self._rows[text] for text in texts]).astype(np.float32)


def test_semantic_failures_demote_items(write_pool, tmp_path):
    pool = write_pool(TEXTS)
    ok = np.array([0.5, 0.5, 0.5, 0.5], dtype=np.float32)
    rows = {text: ok for text in TEXTS}
    rows[TEXTS[1]] = np.array([np.nan, 0, 0, 0], dtype=np.float32)
    rows[TEXTS[4]] = np.zeros(4, dtype=np.float32)
    out = tmp_path / "out"
    summary = run_extraction(
        pool,
        _cfg(),
        out,
        encoder=_FakeEncoder(rows),
        permissive=True,
    )
    assert (summary["exported"], summary["degenerate"]) == (4, 2)
    lines = [
        json.loads(line)
        for line in (out / "degenerate-report.jsonl").read_text().splitlines()
    ]
    assert lines == [
        {"id": 1, "reason": "semantic encoding is non-finite"},
        {"id": 4, "reason": "semantic encoding has zero norm"},
    ]
    semantic = consumer_bundle.BundleReader(out / "semantic.adge")
    assert semantic.header.item_count == 4


class _WrongShapeEncoder:
    dim = 4
    name = "fake:wrong"

    def encode(self, texts):
        return np.zeros((len(texts), 5), dtype=np.float32)


def test_semantic_shape_mismatch(write_pool, tmp_path):
    pool = write_pool(TEXTS[:2])
    with pytest.raises(ExportError, match="semantic encoder produced shape"):
        run_extraction(pool, _cfg(), tmp_path / "out", encoder=_WrongShapeEncoder())


class _ShortBackend(StubBackend):
    def generate(self, text, **kwargs):
        return super().generate(text, **kwargs)[:-1]


def test_backend_count_mismatch(write_pool, tmp_path):
    pool = write_pool(TEXTS[:2])
    with pytest.raises(BackendError, match="returned 2 samples .* expected 3"):
        run_extraction(pool, _cfg(), tmp_path / "out", backend=_ShortBackend())


# ---------------------------------------------------------------------------
# command line


def _write_cli_inputs(tmp_path, cfg_doc=None, texts=TEXTS):
    pool = tmp_path / "pool.jsonl"
    with open(pool, "w", encoding="utf-8") as fh:
        for i, text in enumerate(texts):
            fh.write(json.dumps({"id": i, "text": text}) + "\n")
    config = tmp_path / "extract.json"
    config.write_text(json.dumps(cfg_doc or CFG_DOC))
    return str(pool), str(config)


def test_cli_happy_path(tmp_path, capsys):
    pool, config = _write_cli_inputs(tmp_path)
    out = tmp_path / "out"
    rc = cli.main(["--pool", pool, "--config", config, "--out-dir", str(out)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert (summary["items"], summary["exported"], summary["degenerate"]) == (6, 6, 0)
    assert sorted(os.listdir(out)) == [
        "answers.adge",
        "degenerate-report.jsonl",
        "extraction-metadata.json",
        "semantic.adge",
    ]


def test_cli_permissive_flag_accepted(tmp_path, capsys):
    pool, config = _write_cli_inputs(tmp_path)
    rc = cli.main(
        ["--pool", pool, "--config", config, "--out-dir", str(tmp_path / "o"),
         "--permissive"]
    )
    assert rc == 0
    capsys.readouterr()


def test_cli_missing_pool_is_runtime_failure(tmp_path, capsys):
    _, config = _write_cli_inputs(tmp_path)
    rc = cli.main(
        ["--pool", str(tmp_path / "absent.jsonl"), "--config", config,
         "--out-dir", str(tmp_path / "o")]
    )
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "PoolError"
    assert "cannot read pool" in err["message"]


def test_cli_bad_config_is_usage_failure(tmp_path, capsys):
    pool, config = _write_cli_inputs(tmp_path, cfg_doc={**CFG_DOC, "K": 1})
    rc = cli.main(["--pool", pool, "--config", config, "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ExtractConfigError"


def test_cli_unknown_config_key_is_usage_failure(tmp_path, capsys):
    pool, config = _write_cli_inputs(tmp_path, cfg_doc={**CFG_DOC, "beam_width": 4})
    rc = cli.main(["--pool", pool, "--config", config, "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "unknown config keys" in err["message"]


def test_cli_window_beyond_depth_is_usage_failure(tmp_path, capsys):
    pool, config = _write_cli_inputs(
        tmp_path, cfg_doc={**CFG_DOC, "layer_window": "last:9"}
    )
    rc = cli.main(["--pool", pool, "--config", config, "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert "exceeds model depth" in err["message"]


def test_cli_missing_required_flag(capsys):
    rc = cli.main(["--pool", "x.jsonl"])
    assert rc == 2
    capsys.readouterr()


def test_cli_composes_with_selection_engine(tmp_path, capsys):
    pool, config = _write_cli_inputs(tmp_path)
    out = tmp_path / "bundles"
    assert cli.main(["--pool", pool, "--config", config, "--out-dir", str(out)]) == 0
    pipeline_cfg = tmp_path / "pipeline.json"
    pipeline_cfg.write_text(
        json.dumps(
            {
                "lambda": 0.4,
                "bins": 3,
                "budget": 4,
                "seed": 1,
                "segment": "top",
                "paths": {
                    "answers_bundle": str(out / "answers.adge"),
                    "semantic_bundle": str(out / "semantic.adge"),
                    "output_dir": str(tmp_path / "selection"),
                },
            }
        )
    )
    assert consumer_cli.main(["pipeline", "--config", str(pipeline_cfg)]) == 0
    capsys.readouterr()
    selected = consumer_bundle.read_selected_ids(tmp_path / "selection" / "selected_ids.txt")
    assert len(selected) == 4
    assert all(0 <= i < 6 for i in selected)
