"""Shared exception types."""


class InvalidInput(ValueError):
    """Scanpath or sequence data violates a domain precondition."""


class RangeError(ValueError):
    """A value does not fit the target fixed-point format."""


class ProtocolError(RuntimeError):
    """Peer violated the wire protocol or sent malformed material."""


class AuthError(RuntimeError):
    """Key unwrap or client authorization failed."""


class AlreadyAuthorized(ValueError):
    """The client already holds a wrapped key for this record."""


class TransportError(RuntimeError):
    """Connection setup or frame transfer failed."""


class ParamsMismatch(RuntimeError):
    """The two parties disagree on algorithm, parameters, or sizes."""
