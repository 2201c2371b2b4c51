"""Semantic binning and budgeted selection.

k-means (k-means++ initialization, Lloyd iterations) clusters the pool's
semantic embeddings into B bins; each bin receives an integer quota
proportional to its size (floor + largest-remainder, capped at bin size);
selection takes a rank segment of each bin's score ordering.

All randomness flows through a hand-rolled splitmix64 generator whose
algorithm id ("splitmix64-v1") is recorded in the manifest, so assignments
reproduce exactly across platforms and library versions for a given seed.
Distance computations are chunked with a fixed chunk size and ties always
resolve to the lowest centroid index, making results independent of thread
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import (
    KIND_SEMANTIC,
    DivergenceRecord,
    ManifestLine,
    ManifestSummary,
    SelectionManifest,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    DomainError,
    InfeasibleBudgetError,
)

PRNG_ID = "splitmix64-v1"
SEGMENTS = ("top", "middle", "tail")
_MASK64 = (1 << 64) - 1
_ASSIGN_CHUNK = 2048  # fixed assignment chunk size (not thread-dependent)


class SplitMix64:
    """splitmix64: 64-bit-state PRNG with a one-word state update."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        if (
            isinstance(seed, bool)
            or not isinstance(seed, int)
            or not 0 <= seed <= _MASK64
        ):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_double(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Unbiased uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise DomainError(f"below() needs n >= 1, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


@dataclass(frozen=True)
class KMeansConfig:
    bins: int = 1000
    seed: int = 0
    max_iterations: int = 100
    rel_inertia_tol: float = 1e-4
    normalize_inputs: bool = True

    def __post_init__(self) -> None:
        if not (isinstance(self.bins, int) and self.bins >= 1):
            raise ConfigError(f"bins must be a positive integer, got {self.bins!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed <= _MASK64):
            raise ConfigError(
                f"seed must be an unsigned 64-bit integer, got {self.seed!r}"
            )
        if not (isinstance(self.max_iterations, int) and self.max_iterations >= 1):
            raise ConfigError(
                f"max_iterations must be a positive integer, got {self.max_iterations!r}"
            )
        if not (
            isinstance(self.rel_inertia_tol, (int, float))
            and math.isfinite(self.rel_inertia_tol)
            and self.rel_inertia_tol > 0
        ):
            raise ConfigError(
                f"rel_inertia_tol must be a positive real, got {self.rel_inertia_tol!r}"
            )


@dataclass(frozen=True)
class BinAssignment:
    assignment: np.ndarray  # (N,) int64 bin indices in [0, B)
    centroids: np.ndarray  # (B, p) float64
    inertia: float
    iterations_run: int
    inertia_history: tuple[float, ...]  # one entry per assignment pass
    seed: int
    prng: str = PRNG_ID

    @property
    def bins(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class QuotaTable:
    quotas: np.ndarray  # (B,) int64, sum == budget, each <= bin size
    budget: int

    @property
    def bins(self) -> int:
        return self.quotas.shape[0]


def _semantic_matrix(source) -> np.ndarray:
    """Extract an (N, p) float64 matrix from a reader, array, or block source."""
    if isinstance(source, np.ndarray):
        arr = np.asarray(source, dtype=np.float64)
    else:
        kind = getattr(source, "kind", KIND_SEMANTIC)
        if kind != KIND_SEMANTIC:
            raise ConsistencyError(f"binning needs a semantic bundle, got kind {kind!r}")
        arr = np.asarray(source.block(0, source.item_count), dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[1] != 1:
            raise DomainError(
                f"semantic blocks carry one vector per item, got shape {arr.shape}"
            )
        arr = arr[:, 0, :]
    if arr.ndim != 2:
        raise DomainError(f"semantic input must be (N, p), got shape {arr.shape}")
    return arr


def kmeans_fit(semantic, config: KMeansConfig | None = None) -> BinAssignment:
    """Cluster semantic vectors into config.bins bins, deterministically.

    k-means++ seeding draws from SplitMix64(config.seed); Lloyd iterations
    stop when the relative inertia improvement falls below rel_inertia_tol
    or max_iterations assignment passes have run.
    """
    cfg = config if config is not None else KMeansConfig()
    x = _semantic_matrix(semantic)
    n, p = x.shape
    if n < 1:
        raise DomainError("semantic input is empty")
    finite = np.isfinite(x).all(axis=1)
    if not finite.all():
        raise DataError(
            f"semantic vector {int(np.argmax(~finite))} contains a non-finite value"
        )
    if cfg.bins > n:
        raise ConfigError(f"bins ({cfg.bins}) exceed pool size ({n})")
    if cfg.normalize_inputs:
        norms = np.sqrt(np.einsum("np,np->n", x, x, optimize=False))
        low = norms <= 1e-12
        if low.any():
            raise DataError(
                f"semantic vector {int(np.argmax(low))} has near-zero norm"
            )
        x = x / norms[:, None]

    b = cfg.bins
    rng = SplitMix64(cfg.seed)

    # --- k-means++ initialization
    centroids = np.empty((b, p), dtype=np.float64)
    first = rng.below(n)
    centroids[0] = x[first]
    diff = x - centroids[0]
    d2 = np.einsum("np,np->n", diff, diff, optimize=False)
    np.maximum(d2, 0.0, out=d2)
    for j in range(1, b):
        total = float(d2.sum())
        if total > 0.0:
            target = rng.next_double() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            if idx >= n:
                idx = n - 1
        else:
            idx = rng.below(n)
        centroids[j] = x[idx]
        diff = x - centroids[j]
        nd2 = np.einsum("np,np->n", diff, diff, optimize=False)
        np.maximum(nd2, 0.0, out=nd2)
        np.minimum(d2, nd2, out=d2)

    # --- Lloyd iterations
    x_sq = np.einsum("np,np->n", x, x, optimize=False)
    labels = np.zeros(n, dtype=np.int64)
    point_d2 = np.zeros(n, dtype=np.float64)
    history: list[float] = []
    prev_inertia: float | None = None
    iterations_run = 0
    for iteration in range(1, cfg.max_iterations + 1):
        c_sq = np.einsum("bp,bp->b", centroids, centroids, optimize=False)
        for start in range(0, n, _ASSIGN_CHUNK):
            stop = min(start + _ASSIGN_CHUNK, n)
            cross = x[start:stop] @ centroids.T
            dist = x_sq[start:stop, None] - 2.0 * cross + c_sq[None, :]
            np.maximum(dist, 0.0, out=dist)
            chunk_labels = np.argmin(dist, axis=1)  # ties -> lowest index
            labels[start:stop] = chunk_labels
            point_d2[start:stop] = dist[np.arange(stop - start), chunk_labels]
        inertia = float(point_d2.sum())
        history.append(inertia)
        iterations_run = iteration
        if prev_inertia is not None:
            denom = prev_inertia if prev_inertia > 0.0 else 1.0
            if (prev_inertia - inertia) / denom < cfg.rel_inertia_tol:
                break
        prev_inertia = inertia
        if iteration == cfg.max_iterations:
            break
        # centroid update
        counts = np.bincount(labels, minlength=b)
        sums = np.empty((b, p), dtype=np.float64)
        for col in range(p):
            sums[:, col] = np.bincount(labels, weights=x[:, col], minlength=b)
        nonempty = counts > 0
        new_centroids = centroids.copy()
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty_bins = np.flatnonzero(~nonempty)
        if empty_bins.size:
            # reseed each empty bin (ascending) from the point farthest from
            # its assigned centroid, never reusing a point in the same pass
            avail = point_d2.copy()
            for bin_idx in empty_bins:
                point = int(np.argmax(avail))
                new_centroids[bin_idx] = x[point]
                avail[point] = -1.0
        centroids = new_centroids

    return BinAssignment(
        assignment=labels,
        centroids=centroids,
        inertia=history[-1],
        iterations_run=iterations_run,
        inertia_history=tuple(history),
        seed=cfg.seed,
        prng=PRNG_ID,
    )


def allocate_quotas(bin_sizes, budget: int) -> QuotaTable:
    """Integer quotas proportional to bin sizes: floor + largest remainder.

    Exact integer arithmetic: quota_b starts at (budget*size_b) // N and the
    remaining units go one each to the largest (budget*size_b) % N, ties to
    the lower bin index. Any quota exceeding its bin size is capped and the
    freed units are re-distributed in the same order (unreachable for
    budget <= N; kept as a defensive repair).
    """
    sizes = np.asarray(bin_sizes)
    if sizes.ndim != 1 or sizes.size < 1:
        raise DomainError(f"bin sizes must be a non-empty 1-D sequence, got {sizes.shape}")
    if not np.issubdtype(sizes.dtype, np.integer):
        if not np.all(np.equal(np.mod(sizes, 1), 0)):
            raise DomainError("bin sizes must be integers")
        sizes = sizes.astype(np.int64)
    else:
        sizes = sizes.astype(np.int64)
    if (sizes < 0).any():
        raise DomainError("bin sizes must be non-negative")
    if not isinstance(budget, int) or isinstance(budget, bool) or budget < 0:
        raise ConfigError(f"budget must be a non-negative integer, got {budget!r}")
    n = int(sizes.sum())
    if n < 1:
        raise DomainError("total pool size must be >= 1")
    if budget > n:
        raise InfeasibleBudgetError(f"budget {budget} exceeds pool size {n}")
    if budget and budget > (2**62) // max(int(sizes.max()), 1):
        raise DomainError("budget x bin-size product exceeds the supported range")

    prod = budget * sizes
    quotas = prod // n
    remainders = prod % n
    deficit = budget - int(quotas.sum())
    if deficit > 0:
        order = np.lexsort((np.arange(sizes.size), -remainders))
        quotas[order[:deficit]] += 1

    over = quotas > sizes
    if over.any():  # defensive repair; see docstring
        freed = int((quotas[over] - sizes[over]).sum())
        quotas[over] = sizes[over]
        order = np.lexsort((np.arange(sizes.size), -remainders))
        while freed > 0:
            progressed = False
            for idx in order:
                if freed == 0:
                    break
                if quotas[idx] < sizes[idx]:
                    quotas[idx] += 1
                    freed -= 1
                    progressed = True
            if not progressed:
                raise InfeasibleBudgetError(
                    "quota repair ran out of bin capacity; budget exceeds pool size"
                )

    if int(quotas.sum()) != budget:
        raise ConsistencyError(
            f"quota allocation produced {int(quotas.sum())} units for budget {budget}"
        )
    return QuotaTable(quotas=quotas, budget=budget)


def _segment_window(n: int, m: int, segment: str) -> tuple[int, int]:
    """1-based inclusive rank window of length m within n ranks."""
    if m <= 0:
        return (1, 0)  # empty window
    if segment == "top":
        return (1, m)
    if segment == "tail":
        return (n - m + 1, n)
    # middle: centered at ceil(n/2), shifted left when clipped at either end
    center = (n + 1) // 2
    start = center - (m - 1) // 2
    end = start + m - 1
    if end > n:
        start -= end - n
        end = n
    if start < 1:
        start = 1
        end = m
    return (start, end)


def binwise_select(
    records: list[DivergenceRecord],
    assignment: BinAssignment,
    quotas: QuotaTable,
    segment: str = "top",
    *,
    fusion_weight: float = 0.4,
    global_segment: bool = False,
) -> SelectionManifest:
    """Mark the selected rank segment of each bin (or of the global ranking).

    records[i] must correspond to assignment.assignment[i]; ids must be
    strictly ascending. Ordering is score-descending with ties broken by
    ascending id. With global_segment=True the segment window is taken on
    the pool-wide ordering instead (quotas are ignored, budget is kept);
    rank_in_bin always reports the within-bin rank.
    """
    if segment not in SEGMENTS:
        raise ConfigError(f"unknown segment {segment!r}; expected one of {SEGMENTS}")
    labels = assignment.assignment
    n = labels.shape[0]
    if len(records) != n:
        raise ConsistencyError(
            f"score records cover {len(records)} items but the bin assignment "
            f"covers {n}"
        )
    ids = np.fromiter((r.id for r in records), dtype=np.int64, count=n)
    if n > 1 and not (np.diff(ids) > 0).all():
        raise ConsistencyError("score records must have strictly ascending ids")
    b = assignment.bins
    sizes = np.bincount(labels, minlength=b)
    if quotas.bins != b:
        raise ConsistencyError(
            f"quota table has {quotas.bins} bins but the assignment has {b}"
        )
    if (quotas.quotas > sizes).any():
        bad = int(np.argmax(quotas.quotas > sizes))
        raise ConsistencyError(
            f"bin {bad} quota {int(quotas.quotas[bad])} exceeds its size "
            f"{int(sizes[bad])}"
        )
    budget = quotas.budget
    if budget > n:
        raise InfeasibleBudgetError(f"budget {budget} exceeds pool size {n}")

    scores = np.fromiter((r.score for r in records), dtype=np.float64, count=n)
    order = np.lexsort((ids, -scores))  # score desc, then id asc

    rank_in_bin = np.zeros(n, dtype=np.int64)
    seen = np.zeros(b, dtype=np.int64)
    for pos in order:
        bin_idx = labels[pos]
        seen[bin_idx] += 1
        rank_in_bin[pos] = seen[bin_idx]

    selected = np.zeros(n, dtype=bool)
    if global_segment:
        start, end = _segment_window(n, budget, segment)
        if end >= start:
            selected[order[start - 1 : end]] = True
        scope = "global"
    else:
        starts = np.empty(b, dtype=np.int64)
        ends = np.empty(b, dtype=np.int64)
        for bin_idx in range(b):
            starts[bin_idx], ends[bin_idx] = _segment_window(
                int(sizes[bin_idx]), int(quotas.quotas[bin_idx]), segment
            )
        selected = (rank_in_bin >= starts[labels]) & (rank_in_bin <= ends[labels])
        scope = "bin"

    n_selected = int(selected.sum())
    if n_selected != budget:
        raise ConsistencyError(
            f"selection marked {n_selected} items but the budget is {budget}"
        )

    lines = [
        ManifestLine(
            id=int(ids[i]),
            bin=int(labels[i]),
            score=records[i].score,
            rank_in_bin=int(rank_in_bin[i]),
            selected=bool(selected[i]),
        )
        for i in range(n)
    ]
    summary = ManifestSummary(
        budget=budget,
        bins=b,
        seed=assignment.seed,
        fusion_weight=fusion_weight,
        segment=segment,
        segment_scope=scope,
        prng=assignment.prng,
    )
    return SelectionManifest(lines=lines, summary=summary)
