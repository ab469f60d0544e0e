"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class EmptyIndexSetError(DomainError):
    """A truncation bound admits no lattice index."""


class BracketError(ValueError):
    """The pressure sum does not change sign on the requested interval."""


class ResourceError(RuntimeError):
    """A word enumeration would exceed the configured cap."""


class EstimationError(RuntimeError):
    """An empirical constant could not be stabilised on the given grid."""


class FitError(RuntimeError):
    """A least-squares fit was requested on a degenerate grid."""
