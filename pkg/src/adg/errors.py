"""Exception taxonomy for the adg package.

Every failure surfaced to callers derives from :class:`AdgError`.  Configuration
and budget-feasibility problems derive from :class:`ConfigError` and map to CLI
exit code 2; everything else maps to exit code 1.
"""

from __future__ import annotations


class AdgError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdgError):
    """Invalid configuration value, unknown config key, or missing field."""


class InfeasibleBudgetError(ConfigError):
    """Requested selection budget exceeds the pool size."""


class BundleFormatError(AdgError):
    """Malformed bundle: bad magic, version, header JSON, or field values."""


class PayloadLengthError(BundleFormatError):
    """Bundle payload byte length disagrees with the header dimensions."""


class DataError(AdgError):
    """Invalid data content: non-finite values, bad ids, empty text."""


class DegenerateAnswerError(DataError):
    """An answer vector has (near-)zero norm and cannot be normalized."""


class DomainError(AdgError):
    """A numeric argument is outside its mathematical domain."""


class SolverError(AdgError):
    """The eigensolver failed to converge or produced an invalid spectrum."""


class PsdViolationError(SolverError):
    """A gram matrix eigenvalue is negative beyond the roundoff clamp band."""


class ConsistencyError(AdgError):
    """Cross-artifact disagreement (id sets, counts, or dimensions)."""
