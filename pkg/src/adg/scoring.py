"""Divergence scoring: dispersion, anisotropy, and the fused score.

For one instruction with centered gram S_c (trace tr, eigenvalues
g_1 >= ... >= g_K) and mean unit-answer vector mu:

    dispersion  D = 1 - ||mu||^2      (equals tr/K for unit rows)
    anisotropy  I = 1 - g_1 / sum(g)  (0 if sum(g) is at the trace floor,
                                       and exactly 0 for K = 2)
    score       s = (1 - lambda) * D + lambda * I

Eigenvalues come from a cyclic Jacobi solver specialized for the small
(K <= 64) symmetric matrices this pipeline produces. The solver clamps
roundoff-negative eigenvalues inside a band proportional to the trace and
treats anything below the band as input corruption.

score_pool fans out over fixed-size chunks of the bundle; per-instruction
arithmetic is single-threaded and chunk results are merged in id order, so
output is bitwise independent of the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import geometry
from .bundle import KIND_ANSWERS, DivergenceRecord
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    DegenerateAnswerError,
    DomainError,
    PsdViolationError,
    SolverError,
)

MAX_EIG_SIZE = 64
CLAMP_BAND_REL = 1e-8  # negative-eigenvalue clamp band, relative to trace
RESIDUAL_BOUND_REL = 1e-8  # reconstruction bound, relative to max(trace, 1)
DISPERSION_CHECK_TOL = 1e-6  # |primary form - trace/K| bound in verify mode
SCORE_CHUNK_ITEMS = 512  # fixed chunk size; independent of thread count


@dataclass(frozen=True)
class ScoreConfig:
    fusion_weight: float = 0.4  # lambda: weight of anisotropy in the fused score
    trace_floor: float = 1e-12
    eig_tolerance: float = 1e-12
    max_sweeps: int = 64
    norm_floor: float = geometry.NORM_FLOOR

    def __post_init__(self) -> None:
        if not (
            isinstance(self.fusion_weight, (int, float))
            and math.isfinite(self.fusion_weight)
            and 0.0 <= self.fusion_weight <= 1.0
        ):
            raise ConfigError(
                f"lambda must be a real in [0, 1], got {self.fusion_weight!r}"
            )
        for name in ("trace_floor", "eig_tolerance", "norm_floor"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be a positive real, got {val!r}")
        if not (isinstance(self.max_sweeps, int) and self.max_sweeps >= 1):
            raise ConfigError(f"max_sweeps must be a positive integer, got {self.max_sweeps!r}")


@dataclass(frozen=True)
class EigenSpectrum:
    values: tuple[float, ...]  # sorted non-increasing, clamped to >= 0
    residual: float  # max |Q diag(values) Q^T - input| entry


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver


def _jacobi_rotate(a: list[list[float]], v: list[list[float]], n: int, threshold: float,
                   max_sweeps: int) -> tuple[int, float]:
    """In-place cyclic Jacobi sweeps on a (row-major lists); v accumulates Q.

    Returns (sweeps_used, final_off_diagonal_max). Stops once every
    off-diagonal magnitude is <= threshold.
    """
    sweeps = 0
    off = 0.0
    for sweep in range(1, max_sweeps + 1):
        off = 0.0
        for p in range(n - 1):
            row = a[p]
            for q in range(p + 1, n):
                m = abs(row[q])
                if m > off:
                    off = m
        if off <= threshold:
            return sweeps, off
        sweeps = sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                app = a[p][p]
                aqq = a[q][q]
                diff = aqq - app
                g = 100.0 * abs(apq)
                if abs(diff) + g == abs(diff):
                    t = apq / diff
                else:
                    theta = 0.5 * diff / apq
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(1.0 + theta * theta)
                    )
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                tau = s / (1.0 + c)
                a[p][p] = app - t * apq
                a[q][q] = aqq + t * apq
                a[p][q] = 0.0
                a[q][p] = 0.0
                for i in range(n):
                    if i == p or i == q:
                        continue
                    aip = a[i][p]
                    aiq = a[i][q]
                    nip = aip - s * (aiq + tau * aip)
                    niq = aiq + s * (aip - tau * aiq)
                    a[i][p] = nip
                    a[p][i] = nip
                    a[i][q] = niq
                    a[q][i] = niq
                for i in range(n):
                    vip = v[i][p]
                    viq = v[i][q]
                    v[i][p] = vip - s * (viq + tau * vip)
                    v[i][q] = viq + s * (vip - tau * viq)
    # one final off-diagonal measurement after the last sweep
    off = 0.0
    for p in range(n - 1):
        row = a[p]
        for q in range(p + 1, n):
            m = abs(row[q])
            if m > off:
                off = m
    return sweeps, off


def _eig_core(
    matrix: np.ndarray, trace: float, cfg: ScoreConfig
) -> tuple[list[float], np.ndarray, float]:
    """Eigen-decompose one symmetric matrix; returns (values desc, Q, residual).

    `matrix` must already be symmetrized; `trace` is its trace. Raises
    SolverError on non-convergence or a bad reconstruction, PsdViolationError
    on eigenvalues below the clamp band.
    """
    n = matrix.shape[0]
    a = matrix.tolist()
    max_abs = float(np.max(np.abs(matrix))) if n else 0.0
    if max_abs == 0.0:
        return [0.0] * n, np.eye(n), 0.0
    scale = abs(trace) if trace != 0.0 else max_abs
    threshold = cfg.eig_tolerance * scale
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    _, off = _jacobi_rotate(a, v, n, threshold, cfg.max_sweeps)
    if off > threshold:
        raise SolverError(
            f"eigensolver did not converge after {cfg.max_sweeps} sweeps; "
            f"off-diagonal magnitude {off:.3e} exceeds {threshold:.3e}"
        )
    band = CLAMP_BAND_REL * trace
    raw = [a[i][i] for i in range(n)]
    values: list[float] = []
    for val in raw:
        if val < 0.0:
            if val >= -band:
                val = 0.0
            else:
                raise PsdViolationError(
                    f"eigenvalue {val:.6e} is below the roundoff clamp band "
                    f"-{band:.6e}; gram matrix is not positive semidefinite"
                )
        values.append(val)
    order = sorted(range(n), key=lambda i: -values[i])
    values = [values[i] for i in order]
    q = np.array(v, dtype=np.float64)[:, order]
    lam = np.array(values, dtype=np.float64)
    residual = float(np.max(np.abs((q * lam[None, :]) @ q.T - matrix)))
    bound = RESIDUAL_BOUND_REL * max(trace, 1.0)
    if residual > bound:
        raise SolverError(
            f"eigen reconstruction residual {residual:.3e} exceeds {bound:.3e}"
        )
    return values, q, residual


def eig_symmetric(gram, config: ScoreConfig | None = None, *, return_vectors: bool = False):
    """Eigen-spectrum of a symmetric PSD matrix (CenteredGram or ndarray).

    Returns EigenSpectrum, or (EigenSpectrum, Q) with return_vectors=True
    where the columns of Q are the eigenvectors in value order.
    """
    cfg = config if config is not None else ScoreConfig()
    if isinstance(gram, geometry.CenteredGram):
        matrix = gram.matrix
    else:
        matrix = np.asarray(gram, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    if n > MAX_EIG_SIZE:
        raise DomainError(f"matrix size {n} exceeds the small-matrix limit {MAX_EIG_SIZE}")
    if not np.isfinite(matrix).all():
        raise DataError("gram matrix contains a non-finite value")
    scale = float(np.max(np.abs(matrix))) if n else 0.0
    asym = float(np.max(np.abs(matrix - matrix.T))) if n else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        raise DomainError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    sym = (matrix + matrix.T) * 0.5
    trace = float(np.einsum("ii->", sym, optimize=False))
    values, q, residual = _eig_core(sym, trace, cfg)
    spectrum = EigenSpectrum(values=tuple(values), residual=residual)
    if return_vectors:
        return spectrum, q
    return spectrum


# ---------------------------------------------------------------------------
# score components


def _dispersion_value(trace: float, mean_sq_norm: float, trace_floor: float) -> float:
    if trace <= trace_floor:
        return 0.0
    d = 1.0 - mean_sq_norm
    if d < 0.0:
        return 0.0
    if d > 1.0:
        return 1.0
    return d


def _anisotropy_value(values, trace_floor: float) -> float:
    k = len(values)
    total = 0.0
    for val in values:
        total += val
    if total <= trace_floor or k == 2:
        return 0.0
    return 1.0 - values[0] / total


def dispersion(gram: geometry.CenteredGram, config: ScoreConfig | None = None,
               *, verify: bool = False) -> float:
    """Dispersion D = 1 - ||mu||^2, clamped to [0, 1].

    Returns exactly 0.0 when the gram trace is at or below the trace floor.
    With verify=True, asserts the trace/K identity within 1e-6.
    """
    cfg = config if config is not None else ScoreConfig()
    d = _dispersion_value(gram.trace, gram.mean_vector_sq_norm, cfg.trace_floor)
    if verify:
        alt = gram.trace / gram.k
        if abs(d - alt) > DISPERSION_CHECK_TOL and gram.trace > cfg.trace_floor:
            raise ConsistencyError(
                f"dispersion identity violated: 1-||mu||^2 = {d!r} vs trace/K = {alt!r}"
            )
    return d


def anisotropy(spectrum: EigenSpectrum, config: ScoreConfig | None = None) -> float:
    """Anisotropy I = 1 - g_1/sum(g); 0 at the trace floor and exactly 0 for K=2."""
    cfg = config if config is not None else ScoreConfig()
    return _anisotropy_value(spectrum.values, cfg.trace_floor)


def fuse(dispersion_value: float, anisotropy_value: float,
         config: ScoreConfig | None = None) -> float:
    """Fused score s = (1 - lambda) * D + lambda * I."""
    cfg = config if config is not None else ScoreConfig()
    lam = cfg.fusion_weight
    return (1.0 - lam) * dispersion_value + lam * anisotropy_value


# ---------------------------------------------------------------------------
# batched scoring


def _score_batch(
    block: np.ndarray,
    start_id: int,
    cfg: ScoreConfig,
    *,
    permissive: bool = False,
) -> tuple[list[DivergenceRecord], list[dict]]:
    """Score a (B, K, d) float64 block; ids are start_id..start_id+B-1.

    Fail-fast mode raises on the first invalid item (lowest id); permissive
    mode skips invalid items and reports them in the failure list.
    """
    if block.ndim != 3:
        raise DomainError(f"score block must be 3-D (B, K, d), got shape {block.shape}")
    b, k, d = block.shape
    if k < 2:
        raise DomainError(f"scoring needs K >= 2 answers, got K={k}")
    if d < 1:
        raise DomainError("answer vectors need at least one component")
    if k > MAX_EIG_SIZE:
        raise DomainError(f"K={k} exceeds the small-matrix limit {MAX_EIG_SIZE}")

    finite_ok = np.isfinite(block).all(axis=(1, 2))
    with np.errstate(invalid="ignore", over="ignore"):
        norms = geometry.row_norms_batch(block)
    degenerate = np.zeros(b, dtype=bool)
    if finite_ok.all():
        degenerate = (norms <= cfg.norm_floor).any(axis=1)
    else:
        degenerate[finite_ok] = (norms[finite_ok] <= cfg.norm_floor).any(axis=1)
    bad = ~finite_ok | degenerate

    failures: list[dict] = []
    if bad.any():
        if not permissive:
            i = int(np.argmax(bad))
            raise _item_error(block[i], norms[i], finite_ok[i], cfg, start_id + i)
        work = block.copy()
        norms = norms.copy()
        for i in np.flatnonzero(bad):
            err = _item_error(block[i], norms[i], finite_ok[i], cfg, start_id + int(i))
            failures.append(
                {
                    "id": start_id + int(i),
                    "error": type(err).__name__,
                    "message": str(err),
                }
            )
        work[bad] = 0.0
        work[bad, :, 0] = 1.0
        norms[bad] = 1.0
        block = work

    unit = block / norms[..., None]
    grams, mean_sq, traces = geometry.gram_kernel(unit)

    records: list[DivergenceRecord] = []
    lam = cfg.fusion_weight
    for i in range(b):
        if bad[i]:
            continue
        item_id = start_id + i
        try:
            values, _, _ = _eig_core(grams[i], float(traces[i]), cfg)
        except (SolverError, PsdViolationError) as exc:
            raise type(exc)(f"instruction {item_id}: {exc}") from exc
        dv = _dispersion_value(float(traces[i]), float(mean_sq[i]), cfg.trace_floor)
        iv = _anisotropy_value(values, cfg.trace_floor)
        sv = (1.0 - lam) * dv + lam * iv
        records.append(
            DivergenceRecord(
                id=item_id,
                dispersion=dv,
                anisotropy=iv,
                score=sv,
                eigenvalues=tuple(values),
            )
        )
    return records, failures


def _item_error(item: np.ndarray, norms: np.ndarray, finite: bool,
                cfg: ScoreConfig, item_id: int) -> Exception:
    if not finite:
        bad = np.argwhere(~np.isfinite(item))[0]
        return DataError(
            f"instruction {item_id}: answer vector {int(bad[0])} contains a "
            "non-finite value"
        )
    row = int(np.argmax(norms <= cfg.norm_floor))
    return DegenerateAnswerError(
        f"instruction {item_id}: answer vector {row} has near-zero norm "
        f"{norms[row]:.3e}"
    )


def score_instruction(raw, config: ScoreConfig | None = None, *, item_id: int = 0
                      ) -> DivergenceRecord:
    """Score one K x d raw answer matrix: normalize -> gram -> eigen -> fuse."""
    cfg = config if config is not None else ScoreConfig()
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError(f"answer matrix must be 2-D (K, d), got shape {arr.shape}")
    records, _ = _score_batch(arr[None], start_id=item_id, cfg=cfg, permissive=False)
    return records[0]


class ArraySource:
    """Adapter presenting an in-memory (N, K, d) array as a scoring source."""

    kind = KIND_ANSWERS

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 3:
            raise DomainError(f"array source must be (N, K, d), got shape {arr.shape}")
        self._data = arr

    @property
    def item_count(self) -> int:
        return self._data.shape[0]

    @property
    def vectors_per_item(self) -> int:
        return self._data.shape[1]

    @property
    def dim(self) -> int:
        return self._data.shape[2]

    def block(self, start: int, stop: int) -> np.ndarray:
        return self._data[start:stop]


def score_pool(
    source,
    config: ScoreConfig | None = None,
    *,
    threads: int = 1,
    permissive: bool = False,
    chunk_items: int = SCORE_CHUNK_ITEMS,
) -> tuple[list[DivergenceRecord], list[dict]]:
    """Score every item of an answers bundle (or array) in id order.

    `source` is a BundleReader, an (N, K, d) ndarray, or any object exposing
    item_count / vectors_per_item / kind / block(start, stop). Chunks have a
    fixed size so records are bitwise identical for any `threads` value.
    Fail-fast by default; permissive mode returns (records, failures) with
    invalid items skipped.
    """
    cfg = config if config is not None else ScoreConfig()
    if isinstance(source, np.ndarray):
        source = ArraySource(source)
    kind = getattr(source, "kind", KIND_ANSWERS)
    if kind != KIND_ANSWERS:
        raise ConsistencyError(f"scoring needs an answers bundle, got kind {kind!r}")
    if not (isinstance(threads, int) and threads >= 1):
        raise ConfigError(f"threads must be a positive integer, got {threads!r}")
    if not (isinstance(chunk_items, int) and chunk_items >= 1):
        raise ConfigError(f"chunk_items must be a positive integer, got {chunk_items!r}")
    n = source.item_count
    spans = [(s, min(s + chunk_items, n)) for s in range(0, n, chunk_items)]

    def run_span(span: tuple[int, int]) -> tuple[list[DivergenceRecord], list[dict]]:
        start, stop = span
        block = np.asarray(source.block(start, stop), dtype=np.float64)
        return _score_batch(block, start, cfg, permissive=permissive)

    records: list[DivergenceRecord] = []
    failures: list[dict] = []
    if threads == 1 or len(spans) <= 1:
        for span in spans:
            recs, fails = run_span(span)
            records.extend(recs)
            failures.extend(fails)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for recs, fails in pool.map(run_span, spans):
                records.extend(recs)
                failures.extend(fails)
    return records, failures
