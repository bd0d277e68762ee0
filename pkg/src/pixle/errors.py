"""Exception hierarchy shared across the engine."""


class PixleError(Exception):
    """Base class for all engine errors."""


class ContractViolationError(PixleError):
    """An operation was called with arguments violating its contract."""


class InvalidPatchError(PixleError):
    """Patch larger than the image it is applied to."""


class NoValidDestinationError(PixleError):
    """A mapping function has no admissible destination pixel."""


class DecodeError(PixleError):
    """Malformed or unsupported image payload."""


class ConfigError(PixleError):
    """Invalid attack or campaign configuration."""


class OracleError(PixleError):
    """The classifier oracle failed to answer a query."""


class ProtocolError(OracleError):
    """A remote oracle violated the wire protocol."""


class HandshakeError(ProtocolError):
    """The remote oracle's hello message was invalid or incompatible."""


class DatasetError(PixleError):
    """Manifest or image files could not be loaded."""


class AttackAbortedError(PixleError):
    """An attack stopped early because the oracle failed.

    Carries the number of oracle queries issued before the failure.
    """

    def __init__(self, message: str, queries: int):
        super().__init__(message)
        self.queries = queries
