"""Exception taxonomy shared across the package.

Each class maps onto one CLI exit code so operator tooling can branch on
failures without parsing messages.
"""


class SteernetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SteernetError):
    """Invalid configuration: bad NetSpec fields, shape mismatches between
    declared components, unsupported parameter combinations."""

    exit_code = 2


class BasisError(ConfigError):
    """Basis construction failed (e.g. an atom is identically zero)."""


class DataError(SteernetError):
    """Dataset ingestion or generation failed (bad magic, truncation, ...)."""

    exit_code = 3


class CertificateError(SteernetError):
    """An exact-mode equivariance certificate failed."""

    exit_code = 4


class ContractViolation(SteernetError):
    """An operation was called outside its documented preconditions."""

    exit_code = 1
