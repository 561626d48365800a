"""Exception types raised by the library."""


class VaremError(Exception):
    """Base class for all library errors."""


class TimeOutOfRangeError(VaremError, ValueError):
    """A trajectory was evaluated outside its time span."""


class SuperluminalError(VaremError, ValueError):
    """A trajectory reaches or exceeds the speed of light."""


class SpanExhaustedError(VaremError):
    """A light-cone image falls outside the available trajectory data."""


class CollisionError(VaremError):
    """The light-cone separation dropped below the configured minimum."""


class InvalidPerturbationError(VaremError, ValueError):
    """A variation does not satisfy its Dirichlet endpoint conditions."""


class NotANodeError(VaremError, ValueError):
    """A corner residual was requested at a time that is not a node."""


class TooCloseToNodeError(VaremError, ValueError):
    """A pointwise residual was requested too close to a kink."""


class BoundaryDataError(VaremError, ValueError):
    """Boundary data are inconsistent with the light-cone conditions."""


class NotShortestBoundaryError(VaremError, ValueError):
    """Boundary data do not have the shortest-length geometry."""


class ConvergenceError(VaremError):
    """An iterative solver failed to converge."""


class ConfigError(VaremError, ValueError):
    """A problem or trajectory file could not be parsed."""
