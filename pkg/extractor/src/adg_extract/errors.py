"""Exception taxonomy for the adg-extract package.

Every failure surfaced to callers derives from :class:`ExtractError`.
Configuration problems (bad config values, unknown keys, layer windows that
do not fit the loaded model) derive from :class:`ExtractConfigError` and map
to CLI exit code 2; everything else maps to exit code 1.
"""

from __future__ import annotations


class ExtractError(Exception):
    """Base class for all errors raised by this package."""


class ExtractConfigError(ExtractError):
    """Invalid configuration value, unknown config key, or missing field."""


class PoolError(ExtractError):
    """Malformed instruction pool: bad JSON, bad ids, empty text."""


class BackendError(ExtractError):
    """Model loading or generation failed."""


class ExportError(ExtractError):
    """Bundle export failed: degenerate items in strict mode, dimension
    drift between items, or nothing left to export."""


class DegenerateSampleError(ExtractError):
    """A sampled answer has no poolable tokens."""
