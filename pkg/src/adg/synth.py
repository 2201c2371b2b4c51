"""Synthetic answer/semantic generators for calibration and determinism tests.

Four named scenarios place answer clouds in the four (dispersion, anisotropy)
regimes; geometry is constructed from per-item orthonormal frames so the
target regime holds for every generated item, not just on average:

    low_D_low_I    tight cluster around one unit vector (noise 1e-3),
                   spread dominated by a single direction
    low_D_high_I   small-radius centered simplex around a unit vector:
                   K-1 equal spread directions (isotropic shape)
    high_D_low_I   antipodal +/-u placements: huge spread, one direction
    high_D_high_I  K well-separated orthonormal modes with a common drift

The extra "mixed" scenario draws per-item spread/shape parameters from
continuous ranges and produces clusterable semantic vectors; it exists to
build large pools for end-to-end determinism runs.

All generators are pure functions of (scenario, seed) and emit unit-norm
answer rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SCENARIOS = ("low_D_low_I", "low_D_high_I", "high_D_low_I", "high_D_high_I", "mixed")
QUADRANTS = SCENARIOS[:4]


@dataclass(frozen=True)
class QuadrantScenario:
    name: str
    k: int = 5  # answers per item
    d: int = 16  # answer embedding dimension
    items: int = 32
    semantic_dim: int = 16

    def __post_init__(self) -> None:
        if self.name not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.name!r}; expected one of {SCENARIOS}"
            )
        if not (isinstance(self.k, int) and self.k >= 2):
            raise ConfigError(f"scenario needs k >= 2, got {self.k!r}")
        if not (isinstance(self.d, int) and self.d >= self.k + 1):
            raise ConfigError(
                f"scenario needs d >= k+1 (room for {self.k}+1 orthonormal "
                f"directions), got d={self.d!r}"
            )
        if not (isinstance(self.items, int) and self.items >= 1):
            raise ConfigError(f"scenario needs items >= 1, got {self.items!r}")
        if not (isinstance(self.semantic_dim, int) and self.semantic_dim >= 1):
            raise ConfigError(
                f"scenario needs semantic_dim >= 1, got {self.semantic_dim!r}"
            )


def _unit_rows(arr: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("...d,...d->...", arr, arr, optimize=False))
    return arr / norms[..., None]


def _frames(rng: np.random.Generator, n: int, d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-item orthonormal frames: anchor u (n, d) and k directions (n, d, k)."""
    q, _ = np.linalg.qr(rng.standard_normal((n, d, k + 1)))
    return q[:, :, 0], q[:, :, 1:]


def generate_answers(scenario: QuadrantScenario, seed: int) -> np.ndarray:
    """Answer clouds for a scenario: (items, k, d) float64 unit rows."""
    name, n, k, d = scenario.name, scenario.items, scenario.k, scenario.d
    rng = np.random.default_rng(seed)
    if name == "mixed":
        return _mixed_answers(rng, n, k, d)
    u, frame = _frames(rng, n, d, k)
    jitter = rng.standard_normal((n, k, d)) / np.sqrt(d)
    if name == "low_D_low_I":
        # one dominant in-frame direction, noise scale 1e-3
        w = frame[:, :, 0]
        t = np.linspace(-1.0, 1.0, k)[None, :] + 0.1 * rng.standard_normal((n, k))
        raw = u[:, None, :] + 1e-3 * (t[:, :, None] * w[:, None, :] + 0.1 * jitter)
    elif name == "low_D_high_I":
        # centered simplex of radius 0.18: k-1 equal spread directions
        simplex = frame - frame.mean(axis=2, keepdims=True)
        raw = u[:, None, :] + 0.18 * np.transpose(simplex, (0, 2, 1)) + 0.01 * jitter
    elif name == "high_D_low_I":
        # antipodal +/-u: great spread along a single direction
        signs = np.where(np.arange(k) < (k + 1) // 2, 1.0, -1.0)
        raw = signs[None, :, None] * u[:, None, :] + 0.02 * jitter
    else:  # high_D_high_I
        # k orthonormal modes plus a common drift toward u
        modes = np.transpose(frame, (0, 2, 1))  # (n, k, d)
        raw = 0.35 * u[:, None, :] + modes + 0.02 * jitter
    return _unit_rows(raw)


def _mixed_answers(rng: np.random.Generator, n: int, k: int, d: int) -> np.ndarray:
    """Continuous mixture over spread (scale) and shape (direction share)."""
    u = _unit_rows(rng.standard_normal((n, d)))
    w = _unit_rows(rng.standard_normal((n, d)))
    directional = rng.uniform(0.0, 1.5, n)
    isotropic = rng.uniform(0.0, 0.6, n)
    t = rng.standard_normal((n, k))
    jitter = rng.standard_normal((n, k, d)) / np.sqrt(d)
    raw = (
        u[:, None, :]
        + directional[:, None, None] * t[:, :, None] * w[:, None, :]
        + isotropic[:, None, None] * jitter
    )
    return _unit_rows(raw)


def generate_semantic(
    scenario: QuadrantScenario, seed: int, *, centers: int = 256
) -> np.ndarray:
    """Semantic vectors for a scenario: (items, 1, p) float64 unit vectors.

    The mixed scenario draws from `centers` cluster prototypes so binning has
    real structure to find; quadrant scenarios use unstructured unit vectors.
    """
    n, p = scenario.items, scenario.semantic_dim
    rng = np.random.default_rng((seed, 1))
    if scenario.name == "mixed":
        n_centers = min(centers, n)
        prototypes = _unit_rows(rng.standard_normal((n_centers, p)))
        owner = rng.integers(0, n_centers, n)
        vecs = _unit_rows(prototypes[owner] + 0.1 * rng.standard_normal((n, p)))
    else:
        vecs = _unit_rows(rng.standard_normal((n, p)))
    return vecs[:, None, :]
