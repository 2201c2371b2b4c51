"""Extraction config parsing, validation, and layer-window resolution."""

from __future__ import annotations

import json

import pytest

from adg_extract import (
    ExtractConfigError,
    ExtractionConfig,
    config_echo,
    config_from_dict,
    load_config,
    resolve_layer_window,
)


def test_defaults():
    cfg = config_from_dict({"model": "stub"})
    assert cfg.model == "stub"
    assert cfg.k == 5
    assert cfg.temperature == 1.4
    assert cfg.top_p == 0.9
    assert cfg.max_new_tokens == 180
    assert cfg.layer_window == "last:4"
    assert cfg.semantic_encoder == "hashing:256"
    assert cfg.batch_size == 8
    assert cfg.seed == 0


def test_load_config_round_trip(tmp_path):
    doc = {
        "model": "stub:4:8",
        "K": 3,
        "temperature": 1.0,
        "top_p": 0.5,
        "max_new_tokens": 7,
        "layer_window": [2, 3],
        "semantic_encoder": "hashing:16",
        "batch_size": 2,
        "seed": 99,
    }
    path = tmp_path / "extract.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    assert cfg.k == 3
    assert cfg.layer_window == (2, 3)
    assert cfg.seed == 99
    assert config_echo(cfg) == doc


def test_unknown_key_rejected():
    with pytest.raises(ExtractConfigError, match="unknown config keys.*top_k"):
        config_from_dict({"model": "stub", "top_k": 40})


def test_model_required():
    with pytest.raises(ExtractConfigError, match="model is required"):
        config_from_dict({"K": 5})


def test_config_must_be_object():
    with pytest.raises(ExtractConfigError, match="must be a JSON object"):
        config_from_dict([1, 2])


def test_missing_config_file(tmp_path):
    with pytest.raises(ExtractConfigError, match="cannot read config"):
        load_config(tmp_path / "absent.json")


def test_config_file_not_json(tmp_path):
    path = tmp_path / "extract.json"
    path.write_text("not json {")
    with pytest.raises(ExtractConfigError, match="not valid JSON"):
        load_config(path)


@pytest.mark.parametrize(
    ("key", "value"),
    [
        ("model", ""),
        ("model", 3),
        ("K", 1),
        ("K", True),
        ("K", 2.5),
        ("temperature", 0),
        ("temperature", -1.0),
        ("temperature", "hot"),
        ("temperature", True),
        ("temperature", float("nan")),
        ("top_p", 0),
        ("top_p", 1.5),
        ("max_new_tokens", 0),
        ("max_new_tokens", False),
        ("batch_size", 0),
        ("seed", -1),
        ("seed", 2**64),
        ("seed", True),
        ("seed", 1.5),
        ("semantic_encoder", ""),
        ("semantic_encoder", 7),
    ],
)
def test_field_validation(key, value):
    doc = {"model": "stub", key: value}
    with pytest.raises(ExtractConfigError):
        config_from_dict(doc)


@pytest.mark.parametrize(
    "window",
    ["last:0", "last:x", "last:", "first:4", [0, 3], [3, 2], [1, 2, 3], [1.5, 2], 7, [True, 2]],
)
def test_layer_window_form_rejected(window):
    with pytest.raises(ExtractConfigError, match="layer_window"):
        config_from_dict({"model": "stub", "layer_window": window})


@pytest.mark.parametrize(
    ("window", "normalized"),
    [("last:1", "last:1"), ("last:4", "last:4"), ([2, 5], (2, 5)), ([1, 1], (1, 1))],
)
def test_layer_window_form_accepted(window, normalized):
    cfg = config_from_dict({"model": "stub", "layer_window": window})
    assert cfg.layer_window == normalized


@pytest.mark.parametrize(
    ("window", "depth", "expected"),
    [
        ("last:4", 6, (3, 6)),
        ("last:4", 4, (1, 4)),
        ("last:1", 1, (1, 1)),
        ([2, 5], 6, (2, 5)),
        ([1, 1], 1, (1, 1)),
    ],
)
def test_resolve_layer_window(window, depth, expected):
    assert resolve_layer_window(window, depth) == expected


@pytest.mark.parametrize(
    ("window", "depth"),
    [("last:5", 4), ([2, 5], 4), ([7, 7], 6)],
)
def test_resolve_layer_window_exceeds_depth(window, depth):
    with pytest.raises(ExtractConfigError, match="exceeds model depth"):
        resolve_layer_window(window, depth)


def test_integer_reals_coerced_to_float():
    cfg = config_from_dict({"model": "stub", "temperature": 2, "top_p": 1})
    assert isinstance(cfg.temperature, float) and cfg.temperature == 2.0
    assert isinstance(cfg.top_p, float) and cfg.top_p == 1.0


def test_direct_construction_validates():
    with pytest.raises(ExtractConfigError, match="K must be"):
        ExtractionConfig(model="stub", k=1)
