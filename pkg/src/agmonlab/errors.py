"""Exception hierarchy shared by all modules.

Numerical failures (``NumericalError`` subclasses) map to CLI exit code 2,
configuration and file problems to exit code 1.
"""


class AgmonLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(AgmonLabError, ValueError):
    """Invalid experiment configuration; the message names the offending key."""


class NumericalError(AgmonLabError):
    """A numerical routine could not produce a trustworthy result."""


class PotentialBelowOne(NumericalError, ValueError):
    """A potential evaluated below 1 at a queried point."""


class EnvelopeViolation(NumericalError, ValueError):
    """A potential left its declared polynomial envelope."""


class GridTooCoarse(NumericalError):
    """Fast marching accepted values out of order (causality violation)."""


class NoConvergence(NumericalError):
    """An iterative solver exhausted its budget.

    ``result`` carries the best iterate when one exists.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DomainTooSmall(NumericalError):
    """A requested sphere or window is not resolved by the grid."""


class DimensionOverflow(NumericalError):
    """The tensor-product Hilbert space exceeds the configured cap."""


class PositivityViolation(NumericalError):
    """The vacuum overlap of a ground state is not strictly positive."""


class QuadratureFailure(NumericalError):
    """Adaptive quadrature did not reach its tolerance."""


class GridExitRateHigh(NumericalError):
    """Too many Monte Carlo paths left the grid carrying the wavefunction."""


class GridMismatch(NumericalError, ValueError):
    """Fields that must be joined node-by-node live on incompatible grids."""


class EmptyWindow(NumericalError, ValueError):
    """A radial window selects no usable nodes."""
