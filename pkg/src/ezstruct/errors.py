"""Exception hierarchy shared by every module."""


class EzError(Exception):
    """Base class for library errors."""


class InvalidInputError(EzError, ValueError):
    pass


class InvalidMonomorphismError(InvalidInputError):
    """An edge matrix is singular, so the edge map is not finite index."""


class CoverageError(EzError):
    pass


class CertificationError(EzError):
    pass


class NotCertifiedError(CertificationError):
    """The requested property is only implemented for specific constructions."""


class FitError(EzError):
    pass


class DomainTooSmallError(EzError):
    pass


class DepthError(EzError):
    pass


class ResourceGuardError(EzError):
    """A memory/state-count guard tripped. ``partial`` holds what was computed."""

    def __init__(self, message, count=0, partial=None):
        super().__init__(message)
        self.count = count
        self.partial = partial
