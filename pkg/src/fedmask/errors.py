"""Error types shared across the framework.

Every protocol-visible failure is a subclass of :class:`FedMaskError` whose
class name doubles as the machine-readable error code on the wire, so a
rejected request states no more than its failure class plus a short detail
string.
"""

from __future__ import annotations


class FedMaskError(Exception):
    """Base class for all framework errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def details(self) -> dict:
        """Structured attributes that travel with the message on the wire.

        Subclasses carrying more state than a string override this so the
        receiving side can rebuild an equivalent exception.
        """
        return {}


# --- masking ---------------------------------------------------------------

class ModulusTooLarge(FedMaskError):
    """Modulus does not leave enough headroom for the client count."""

    def __init__(self, message: str, max_bit_width: int = 0):
        super().__init__(message)
        self.max_bit_width = max_bit_width

    def details(self) -> dict:
        return {"max_bit_width": self.max_bit_width}


class NotPrime(FedMaskError):
    pass


class ValueOutOfField(FedMaskError):
    pass


class ShapeMismatch(FedMaskError):
    pass


class NonFiniteInput(FedMaskError):
    pass


class InvalidVariance(FedMaskError):
    pass


# --- protocol / codec ------------------------------------------------------

class EncodingError(FedMaskError):
    pass


# --- identity / accounts ---------------------------------------------------

class MalformedHash(FedMaskError):
    pass


class UsernameTaken(FedMaskError):
    pass


class BadCredentials(FedMaskError):
    pass


class TokenAlreadyBound(FedMaskError):
    pass


class RosterFull(FedMaskError):
    pass


class UnknownProject(FedMaskError):
    pass


# --- server coordination ---------------------------------------------------

class InvalidConfig(FedMaskError):
    pass


class NotParticipant(FedMaskError):
    pass


class ProjectNotRunning(FedMaskError):
    """Carries the project status so callers can tell Done from Failed."""

    def __init__(self, message: str, status: str = "", failure: str | None = None):
        super().__init__(message)
        self.status = status
        self.failure = failure

    def details(self) -> dict:
        out = {}
        if self.status:
            out["status"] = self.status
        if self.failure:
            out["failure"] = self.failure
        return out


class SyncMismatch(FedMaskError):
    pass


class DuplicateSubmission(FedMaskError):
    pass


class TypeMismatch(FedMaskError):
    pass


class MissingParameter(FedMaskError):
    pass


class IdentityMismatch(FedMaskError):
    pass


class DuplicateCompensation(FedMaskError):
    pass


class MissingCompensation(FedMaskError):
    pass


class FlagDisagreement(FedMaskError):
    pass


class ResultNotReady(FedMaskError):
    pass


# --- compensator -----------------------------------------------------------

class DuplicateNoise(FedMaskError):
    pass


class InconsistentRound(FedMaskError):
    pass


class MalformedEnvelope(FedMaskError):
    pass


class ServerUnreachable(FedMaskError):
    pass


# --- client ----------------------------------------------------------------

class UnknownParameter(FedMaskError):
    pass


class MissingGlobal(FedMaskError):
    pass


class DivisionByZero(FedMaskError):
    pass


class ParseError(FedMaskError):
    def __init__(self, message: str, row: int = 0, column: int = 0):
        super().__init__(message)
        self.row = row
        self.column = column

    def details(self) -> dict:
        return {"row": self.row, "column": self.column}


class EmptyDataset(FedMaskError):
    pass


class UserDeclined(FedMaskError):
    pass


ERROR_CLASSES = {
    cls.__name__: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, FedMaskError)
}


def error_from_code(code: str, message: str, details: dict | None = None) -> FedMaskError:
    """Rebuild a typed error from its wire code (unknown codes fall back to base).

    ``details`` restores structured attributes the sender attached to the
    envelope; keys the class does not accept are dropped rather than fatal,
    so an older client can still decode a newer server's errors.
    """
    cls = ERROR_CLASSES.get(code, FedMaskError)
    if details:
        try:
            return cls(message, **details)
        except TypeError:
            pass
    try:
        return cls(message)
    except TypeError:
        return FedMaskError(message)
