"""Answer-vector geometry: unit-normalized answer matrices and centered grams.

Given K raw answer embeddings h_k for one instruction, this module produces

    v_k = h_k / ||h_k||            (unit rows, AnswerMatrix)
    mu  = (1/K) sum_k v_k
    W   = V - 1 mu^T
    S_c = W W^T                    (centered gram, CenteredGram)

S_c is symmetrized after computation and is invariant to adding a constant
vector to every row and to right-multiplication by any orthogonal matrix.

All arithmetic runs at double precision with a fixed summation order
(np.einsum without optimization), so results are independent of batch size
and thread count: scoring a block of instructions and scoring one
instruction produce bitwise-identical numbers for the shared items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateAnswerError, DomainError

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class AnswerMatrix:
    """One instruction's K unit-norm answer vectors plus their source norms."""

    rows: np.ndarray  # (K, d) float64, each row unit L2 norm
    source_norms: np.ndarray  # (K,) float64, norms before normalization

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class CenteredGram:
    """K x K centered gram matrix with its trace and the mean-vector norm."""

    matrix: np.ndarray  # (K, K) float64, symmetric
    mean_vector_sq_norm: float
    trace: float

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def _check_answer_shape(arr: np.ndarray) -> None:
    if arr.ndim != 2:
        raise DomainError(f"answer matrix must be 2-D (K, d), got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DomainError(f"scoring needs K >= 2 answers, got K={arr.shape[0]}")
    if arr.shape[1] < 1:
        raise DomainError("answer vectors need at least one component")


def row_norms_batch(block: np.ndarray) -> np.ndarray:
    """L2 norms of the K rows for each item in a (B, K, d) block."""
    sq = np.einsum("bkd,bkd->bk", block, block, optimize=False)
    return np.sqrt(sq)


def gram_kernel(unit_block: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered grams for a (B, K, d) block of unit-row matrices.

    Returns (grams (B, K, K), mean_sq_norms (B,), traces (B,)). This is the
    single arithmetic path for gram construction; centered_gram() wraps it
    with B=1.
    """
    mu = unit_block.mean(axis=1)
    mean_sq = np.einsum("bd,bd->b", mu, mu, optimize=False)
    w = unit_block - mu[:, None, :]
    grams = np.einsum("bik,bjk->bij", w, w, optimize=False)
    grams = (grams + np.transpose(grams, (0, 2, 1))) * 0.5
    traces = np.einsum("bii->b", grams, optimize=False)
    return grams, mean_sq, traces


def normalize_answers(raw, *, norm_floor: float = NORM_FLOOR) -> AnswerMatrix:
    """Divide each answer row by its L2 norm, recording the source norms.

    Rejects non-finite entries and rows with norm <= norm_floor, naming the
    offending row.
    """
    arr = np.asarray(raw, dtype=np.float64)
    _check_answer_shape(arr)
    finite = np.isfinite(arr)
    if not finite.all():
        bad_row = int(np.argwhere(~finite)[0][0])
        raise DataError(f"answer vector {bad_row} contains a non-finite value")
    norms = row_norms_batch(arr[None])[0]
    low = norms <= norm_floor
    if low.any():
        bad_row = int(np.argmax(low))
        raise DegenerateAnswerError(
            f"answer vector {bad_row} has near-zero norm {norms[bad_row]:.3e}"
        )
    rows = arr / norms[:, None]
    return AnswerMatrix(rows=rows, source_norms=norms)


def centered_gram(answers) -> CenteredGram:
    """Centered gram S_c = W W^T of an AnswerMatrix (or a plain row matrix).

    Plain arrays are accepted so the invariance identities (translation,
    rotation) can be exercised on arbitrary row sets; scoring always passes
    unit rows.
    """
    if isinstance(answers, AnswerMatrix):
        rows = answers.rows
    else:
        rows = np.asarray(answers, dtype=np.float64)
        _check_answer_shape(rows)
        if not np.isfinite(rows).all():
            raise DataError("answer matrix contains a non-finite value")
    grams, mean_sq, traces = gram_kernel(rows[None])
    return CenteredGram(
        matrix=grams[0],
        mean_vector_sq_norm=float(mean_sq[0]),
        trace=float(traces[0]),
    )
