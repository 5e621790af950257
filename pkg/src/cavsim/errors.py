"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class TraceParseError(SimError):
    """Malformed trace input (carries a line number when known)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(SimError):
    """Input does not match the expected schema (missing column, unknown module, ...)."""


class ValidationError(SimError):
    """Well-formed input with invalid content (non-monotonic ticks, duplicate ids, ...)."""


class ConfigError(SimError):
    """Invalid configuration value."""


class NotFoundError(SimError):
    """Lookup of an unknown key (vehicle, station, tick, ...)."""


class ContractViolation(SimError):
    """A caller broke a documented precondition."""


class GeometryError(SimError):
    """Degenerate geometry that the perception model cannot project."""
