"""Exception types shared across the package."""


class ZollkitError(Exception):
    """Base class for all package errors."""


class InvalidConnectionError(ZollkitError):
    """Christoffel symbols fail the torsion-free symmetry check."""


class ChartMismatchError(ZollkitError):
    """Two objects that must live in the same chart do not."""


class ChartError(ZollkitError):
    """Evaluation at a point where the active chart degenerates."""


class SingularChartError(ZollkitError):
    """Integration stalled near a chart singularity.

    The last valid state is attached as ``last_state``.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class FiniteDifferenceError(ZollkitError):
    """Finite-difference derivative produced non-finite values."""


class PeriodMismatchError(ZollkitError):
    """Jacobi solutions are not quasi-periodic over the supplied period."""


class ResolutionError(ZollkitError):
    """Sampling too coarse to track an angle or branch reliably."""


class ProfileError(ZollkitError):
    """Profile functions violate parity, range or support conditions."""


class OpenOrbitError(ZollkitError):
    """An operation that needs a closed orbit was given an open one."""


class DegenerateMonodromyError(ZollkitError):
    """Variational solutions fail to span the normal directions."""


class DomainError(ZollkitError):
    """Input lies outside the domain where a map is defined."""


class PreconditionError(ZollkitError):
    """Input violates a stated precondition (e.g. band too large)."""


class ConvergenceError(ZollkitError):
    """An iteration failed to converge; ``history`` holds residuals."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ModelMismatchError(ZollkitError):
    """A fitted model does not describe the data to tolerance."""


class PolarLocusError(ZollkitError):
    """Evaluation on the conic where the symplectic form has its pole."""


class ConfigError(ZollkitError):
    """Configuration file could not be parsed or validated."""
