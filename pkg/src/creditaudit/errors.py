"""Exception hierarchy shared by all creditaudit modules."""


class AuditError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(AuditError):
    """Schema definition is invalid or does not match the data."""


class DataError(AuditError):
    """Data file or table content violates a precondition."""


class ConfigError(AuditError):
    """Experiment or CLI configuration is invalid."""
