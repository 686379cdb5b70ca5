"""Exception types shared across the package."""


class EvadaptError(Exception):
    """Base class for package errors."""


class EventParseError(EvadaptError, ValueError):
    """Raised when an event file is malformed.

    ``offset`` is the byte offset of the first bad header field or record.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(EvadaptError, ValueError):
    """Raised when data violates a domain invariant (coordinates, polarity, ...)."""


class ContractError(EvadaptError, ValueError):
    """Raised when a tensor does not match the shape contract of an operation."""


class ConfigError(EvadaptError, ValueError):
    """Raised for invalid or inconsistent configuration."""


class IngestionError(EvadaptError, ValueError):
    """Raised when a dataset file cannot be read or a layout is broken."""


class ExportError(EvadaptError, OSError):
    """Raised when writing an export artifact fails."""


class NonFiniteLossError(EvadaptError, FloatingPointError):
    """Raised when a training step produces a non-finite loss term."""

    def __init__(self, term, value):
        super().__init__(f"loss term '{term}' is non-finite ({value})")
        self.term = term
        self.value = value
