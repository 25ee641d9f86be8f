"""Exception hierarchy shared by every qseal module."""


class QSealError(Exception):
    """Base class for all qseal errors."""


class ChannelNotTracePreserving(QSealError, ValueError):
    pass


class InvalidPovm(QSealError, ValueError):
    pass


class NotContractive(QSealError, ValueError):
    """An affine Bloch map sends some point of the unit ball outside it."""


class ZeroProbabilityOutcome(QSealError, ValueError):
    pass


class DomainError(QSealError, ValueError):
    pass


class LengthMismatch(QSealError, ValueError):
    pass


class ExplosionError(QSealError):
    """An exact enumeration would exceed its configured cap."""


class EmptyCandidateSet(QSealError):
    """No string of the search family clears the likelihood threshold."""


class TransportError(QSealError):
    """Framing violation or premature close on the wire.

    ``partial`` carries whatever transcript was collected before the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class VersionMismatch(TransportError):
    pass


class ConfigError(QSealError, ValueError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(f"{key}: {message}" if message else f"invalid or missing config key: {key}")


class ParseError(QSealError, ValueError):
    pass
