"""Built-in correctness checks runnable as `adg verify`.

Each check recomputes expected values through an independent route (closed
forms, numpy's eigensolver, exact rational arithmetic) and compares against
the production code path. Checks resolve the production functions through
their modules at call time, so a faulty implementation cannot pass by
having been imported before the fault.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import binning, bundle, geometry, scoring
from .errors import AdgError

CheckResult = tuple[str, bool, str]


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def check_dispersion_identity() -> CheckResult:
    """(1 - |mu|^2) equals trace(S_c)/K for unit-row inputs."""
    rng = np.random.default_rng(20260101)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 9))
        d = int(rng.integers(3, 65))
        matrix = geometry.normalize_answers(rng.normal(size=(k, d)))
        gram = geometry.centered_gram(matrix)
        via_mean = 1.0 - gram.mean_vector_sq_norm
        via_trace = gram.trace / k
        worst = max(worst, abs(via_mean - via_trace))
    ok = worst <= 1e-6
    return ("dispersion_identity", ok, f"max deviation {worst:.3e} (bound 1e-6)")


def check_hand_constants() -> CheckResult:
    """Frozen closed-form inputs reproduce their exact scores."""
    cfg = scoring.ScoreConfig()
    problems = []

    # Three orthonormal answers: D = 2/3, I = 1/2, s = 0.6 at lambda 0.4.
    tri = np.eye(3, 4)
    rec = scoring.score_instruction(tri, cfg)
    if not _close(rec.dispersion, 2.0 / 3.0, 1e-9):
        problems.append(f"orthonormal D {rec.dispersion!r}")
    if not _close(rec.anisotropy, 0.5, 1e-9):
        problems.append(f"orthonormal I {rec.anisotropy!r}")
    if not _close(rec.score, 0.6, 1e-9):
        problems.append(f"orthonormal s {rec.score!r}")
    expect_eigs = (1.0, 1.0, 0.0)
    if any(not _close(g, e, 1e-9) for g, e in zip(rec.eigenvalues, expect_eigs)):
        problems.append(f"orthonormal eigenvalues {rec.eigenvalues!r}")

    # Collinear +/- answers: I exactly 0, D = 8/9.
    col = np.zeros((3, 2))
    col[0, 0] = 1.0
    col[1, 0] = -1.0
    col[2, 0] = 1.0
    rec = scoring.score_instruction(col, cfg)
    if not _close(rec.dispersion, 8.0 / 9.0, 1e-9):
        problems.append(f"collinear D {rec.dispersion!r}")
    if rec.anisotropy != 0.0:
        problems.append(f"collinear I {rec.anisotropy!r} (want exact 0.0)")
    if not _close(rec.score, 0.6 * (8.0 / 9.0), 1e-9):
        problems.append(f"collinear s {rec.score!r}")

    # Identical answers: D exactly 0, I exactly 0, s exactly 0.
    same = np.tile(np.array([[0.6, 0.8]]), (4, 1))
    rec = scoring.score_instruction(same, cfg)
    if rec.dispersion != 0.0 or rec.anisotropy != 0.0 or rec.score != 0.0:
        problems.append(
            f"identical answers D={rec.dispersion!r} I={rec.anisotropy!r} "
            f"s={rec.score!r} (want exact zeros)"
        )

    # K = 2 orthonormal pair: D = 0.5, I exactly 0.
    pair = np.eye(2, 3)
    rec = scoring.score_instruction(pair, cfg)
    if not _close(rec.dispersion, 0.5, 1e-9):
        problems.append(f"pair D {rec.dispersion!r}")
    if rec.anisotropy != 0.0:
        problems.append(f"pair I {rec.anisotropy!r} (want exact 0.0 at K=2)")

    # Fusion of representable constants is exact in IEEE arithmetic.
    fused = scoring.fuse(0.5, 0.25, cfg)
    if fused != 0.4:
        problems.append(f"fuse(0.5, 0.25) {fused!r} (want exactly 0.4)")

    ok = not problems
    return ("hand_constants", ok, "; ".join(problems) if problems else "5 frozen cases")


def check_eigen_oracle() -> CheckResult:
    """Solver spectra match trace/Frobenius identities and numpy's eigvalsh."""
    rng = np.random.default_rng(20260202)
    worst = 0.0
    worst_aniso = 0.0
    for _ in range(1000):
        raw = rng.normal(size=(5, 7))
        matrix = geometry.normalize_answers(raw)
        gram = geometry.centered_gram(matrix)
        arr = np.asarray(gram.matrix, dtype=np.float64)
        spectrum = scoring.eig_symmetric(arr)
        values = np.array(spectrum.values)

        scale = max(abs(gram.trace), 1.0)
        worst = max(worst, abs(values.sum() - gram.trace) / scale)
        fro2 = float(np.sum(arr * arr))
        worst = max(worst, abs(float(np.sum(values * values)) - fro2) / max(fro2, 1.0))
        reference = np.linalg.eigvalsh(arr)[::-1]
        worst = max(
            worst,
            float(np.max(np.abs(values - reference))) / scale,
        )
        aniso = scoring.anisotropy(spectrum, scoring.ScoreConfig())
        worst_aniso = max(worst_aniso, aniso)
    bound = (5 - 2) / (5 - 1) + 1e-9
    ok = worst <= 1e-8 and worst_aniso <= bound
    return (
        "eigen_oracle",
        ok,
        f"max relative deviation {worst:.3e} (bound 1e-8), "
        f"max anisotropy {worst_aniso:.9f} (bound {bound:.9f})",
    )


def check_translation_invariance() -> CheckResult:
    """Adding a constant vector to every answer leaves the centered gram fixed."""
    rng = np.random.default_rng(20260303)
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        d = int(rng.integers(3, 33))
        raw = rng.normal(size=(k, d))
        shift = rng.normal(size=d) * 10.0
        g1 = geometry.centered_gram(raw)
        g2 = geometry.centered_gram(raw + shift)
        worst = max(
            worst,
            float(np.max(np.abs(np.asarray(g1.matrix) - np.asarray(g2.matrix)))),
        )
        worst = max(worst, abs(g1.trace - g2.trace))
    ok = worst <= 1e-9
    return ("translation_invariance", ok, f"max deviation {worst:.3e} (bound 1e-9)")


def check_rotation_invariance() -> CheckResult:
    """Scores are unchanged under a common orthogonal rotation of the answers."""
    rng = np.random.default_rng(20260404)
    cfg = scoring.ScoreConfig()
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        d = int(rng.integers(3, 17))
        raw = rng.normal(size=(k, d))
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        r1 = scoring.score_instruction(raw, cfg)
        r2 = scoring.score_instruction(raw @ q.T, cfg)
        worst = max(
            worst,
            abs(r1.dispersion - r2.dispersion),
            abs(r1.anisotropy - r2.anisotropy),
            abs(r1.score - r2.score),
        )
    ok = worst <= 1e-9
    return ("rotation_invariance", ok, f"max deviation {worst:.3e} (bound 1e-9)")


def check_rescale_stability() -> CheckResult:
    """Per-answer positive rescaling is erased by row normalization."""
    rng = np.random.default_rng(20260505)
    cfg = scoring.ScoreConfig()
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        d = int(rng.integers(3, 17))
        raw = rng.normal(size=(k, d))
        scales = 10.0 ** rng.uniform(-1.0, 1.0, size=k)
        r1 = scoring.score_instruction(raw, cfg)
        r2 = scoring.score_instruction(raw * scales[:, None], cfg)
        worst = max(
            worst,
            abs(r1.dispersion - r2.dispersion),
            abs(r1.anisotropy - r2.anisotropy),
            abs(r1.score - r2.score),
        )
    ok = worst <= 1e-12
    return ("rescale_stability", ok, f"max deviation {worst:.3e} (bound 1e-12)")


def _fraction_quotas(sizes: list[int], budget: int) -> list[int]:
    """Largest-remainder allocation in exact rational arithmetic."""
    total = sum(sizes)
    shares = [Fraction(budget * s, total) for s in sizes]
    floors = [int(sh) for sh in shares]
    deficit = budget - sum(floors)
    order = sorted(range(len(sizes)), key=lambda i: (-(shares[i] - floors[i]), i))
    quotas = list(floors)
    for i in order[:deficit]:
        quotas[i] += 1
    return quotas


def check_quota_exactness() -> CheckResult:
    """Quota tables sum exactly to the budget and match exact rational math."""
    problems = []
    worked = [
        (([7, 3], 4), [3, 1]),
        (([5, 5], 3), [2, 1]),
        (([1, 9], 5), [1, 4]),
    ]
    for (sizes, budget), expected in worked:
        table = binning.allocate_quotas(np.array(sizes, dtype=np.int64), budget)
        got = table.quotas.tolist()
        if got != expected:
            problems.append(f"sizes={sizes} budget={budget}: got {got}, want {expected}")

    rng = np.random.default_rng(20260606)
    for trial in range(10000):
        bins = int(rng.integers(1, 64))
        sizes = rng.integers(0, 50, size=bins)
        if sizes.sum() == 0:
            sizes[int(rng.integers(0, bins))] = 1
        total = int(sizes.sum())
        budget = int(rng.integers(1, total + 1))
        table = binning.allocate_quotas(sizes.astype(np.int64), budget)
        quotas = table.quotas
        if int(quotas.sum()) != budget:
            problems.append(f"trial {trial}: sum {int(quotas.sum())} != {budget}")
            break
        if np.any(quotas < 0) or np.any(quotas > sizes):
            problems.append(f"trial {trial}: quota out of [0, size] range")
            break
        expected = _fraction_quotas([int(s) for s in sizes], budget)
        if quotas.tolist() != expected:
            problems.append(f"trial {trial}: mismatch vs exact rational allocation")
            break

    ok = not problems
    return (
        "quota_exactness",
        ok,
        "; ".join(problems) if problems else "3 worked cases + 10000 random tables",
    )


def _record_pool(rng: np.random.Generator, n: int) -> list[bundle.DivergenceRecord]:
    cfg = scoring.ScoreConfig()
    records = []
    for i in range(n):
        raw = rng.normal(size=(4, 6))
        rec = scoring.score_instruction(raw, cfg, item_id=i)
        records.append(rec)
    return records


def check_degenerate_bins() -> CheckResult:
    """One bin reduces to a global top-M cut; N bins match exact rational quotas."""
    problems = []
    rng = np.random.default_rng(20260707)

    # Single bin: selection must be exactly the global top-M by (score, id).
    n, budget = 60, 17
    records = _record_pool(rng, n)
    semantic = rng.normal(size=(n, 8))
    assignment = binning.kmeans_fit(semantic, binning.KMeansConfig(bins=1, seed=3))
    quotas = binning.allocate_quotas(
        np.bincount(assignment.assignment, minlength=1), budget
    )
    manifest = binning.binwise_select(records, assignment, quotas, "top")
    got = manifest.selected_ids()
    order = sorted(range(n), key=lambda i: (-records[i].score, records[i].id))
    want = sorted(records[i].id for i in order[:budget])
    if got != want:
        problems.append(f"single-bin selection {got[:6]}... != top-{budget} cut")

    # N bins over N distinct points: every bin has size one, so exact
    # rational quota math decides exactly which bins receive an item.
    for trial in range(20):
        n = int(rng.integers(5, 51))
        budget = int(rng.integers(1, n + 1))
        records = _record_pool(rng, n)
        semantic = rng.normal(size=(n, 6))
        assignment = binning.kmeans_fit(
            semantic, binning.KMeansConfig(bins=n, seed=trial)
        )
        sizes = np.bincount(assignment.assignment, minlength=n)
        quotas = binning.allocate_quotas(sizes, budget)
        expected_quotas = _fraction_quotas([int(s) for s in sizes], budget)
        if quotas.quotas.tolist() != expected_quotas:
            problems.append(f"trial {trial}: N-bin quotas diverge from exact math")
            break
        manifest = binning.binwise_select(records, assignment, quotas, "top")
        labels = assignment.assignment
        want = sorted(
            records[i].id
            for i in range(n)
            if expected_quotas[int(labels[i])] == 1
        )
        if manifest.selected_ids() != want:
            problems.append(f"trial {trial}: N-bin selection mismatch")
            break

    ok = not problems
    return (
        "degenerate_bins",
        ok,
        "; ".join(problems) if problems else "single-bin cut + 20 N-bin pools",
    )


def check_determinism() -> CheckResult:
    """Scores, bins, and manifests are identical across threads and reruns."""
    rng = np.random.default_rng(20260808)
    n = 400
    block = rng.normal(size=(n, 5, 16))
    semantic = rng.normal(size=(n, 12))
    cfg = scoring.ScoreConfig()

    rec_a, _ = scoring.score_pool(block, cfg, threads=1)
    rec_b, _ = scoring.score_pool(block, cfg, threads=3)
    rec_c, _ = scoring.score_pool(block, cfg, threads=1, chunk_items=64)
    if rec_a != rec_b:
        return ("determinism", False, "score records differ across thread counts")
    if rec_a != rec_c:
        return ("determinism", False, "score records differ across batch sizes")

    kcfg = binning.KMeansConfig(bins=16, seed=11)
    fit1 = binning.kmeans_fit(semantic, kcfg)
    fit2 = binning.kmeans_fit(semantic, kcfg)
    if not np.array_equal(fit1.assignment, fit2.assignment):
        return ("determinism", False, "bin assignments differ across reruns")
    if not np.array_equal(fit1.centroids, fit2.centroids):
        return ("determinism", False, "centroids differ across reruns")

    quotas = binning.allocate_quotas(
        np.bincount(fit1.assignment, minlength=16), 100
    )
    m1 = binning.binwise_select(rec_a, fit1, quotas, "top")
    m2 = binning.binwise_select(rec_b, fit2, quotas, "top")
    lines1 = [line.to_line() for line in m1.lines]
    lines2 = [line.to_line() for line in m2.lines]
    if lines1 != lines2 or m1.selected_ids() != m2.selected_ids():
        return ("determinism", False, "selection manifests differ across reruns")
    return ("determinism", True, "400-item pool, threads {1,3}, reruns agree")


CHECKS = (
    check_dispersion_identity,
    check_hand_constants,
    check_eigen_oracle,
    check_translation_invariance,
    check_rotation_invariance,
    check_rescale_stability,
    check_quota_exactness,
    check_degenerate_bins,
    check_determinism,
)


def run_all() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            results.append(check())
        except AdgError as exc:
            name = check.__name__.removeprefix("check_")
            results.append((name, False, f"{type(exc).__name__}: {exc}"))
    return results
