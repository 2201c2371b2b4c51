"""Shared helpers for the test suite."""

from __future__ import annotations

import os

import numpy as np
import pytest

from adg import bundle


@pytest.fixture
def small_pool(tmp_path):
    """A 40-item answers+semantic bundle pair with varied geometry."""
    rng = np.random.default_rng(424242)
    n, k, d, p = 40, 4, 8, 6
    answers = rng.normal(size=(n, k, d))
    semantic = rng.normal(size=(n, p))
    answers_path = os.path.join(tmp_path, "answers.adge")
    semantic_path = os.path.join(tmp_path, "semantic.adge")
    bundle.write_bundle(answers_path, bundle.KIND_ANSWERS, answers)
    bundle.write_bundle(semantic_path, bundle.KIND_SEMANTIC, semantic)
    return {
        "answers": answers,
        "semantic": semantic,
        "answers_path": answers_path,
        "semantic_path": semantic_path,
        "n": n,
        "k": k,
        "d": d,
        "p": p,
        "dir": tmp_path,
    }
