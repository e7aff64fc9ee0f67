"""Exception hierarchy shared by the solvers and the batch runner."""


class FluxlimError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FluxlimError, ValueError):
    """Invalid parameters, measures or configuration entries."""


class CFLViolation(FluxlimError):
    """A time step exceeds the stability bound of the scheme."""


class NegativeDensityError(FluxlimError):
    """A density dropped below the round-off guard."""


class SingularBarrierError(FluxlimError):
    """The density reached the singular barrier of a degenerate-singular flux."""
