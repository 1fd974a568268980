"""Exception and warning types shared across the package."""


class ErgodiffError(Exception):
    """Base class for all package errors."""


class NonFiniteEvaluation(ErgodiffError):
    """A model field returned NaN/Inf on a finite input."""


class Blowup(ErgodiffError):
    """A simulated state left the guard ball.

    Signals either violated drift recurrence or a too-large time step.
    """

    def __init__(self, message, path_index=None, step=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step


class BinningMismatch(ErgodiffError):
    """Two histograms were compared on different grids."""


class ReturnTimeout(ErgodiffError):
    """An embedded return chain exceeded its time cap."""


class UncenteredInput(ErgodiffError):
    """A function that must average to zero under the invariant measure does not."""


class InterpolationRangeError(ErgodiffError):
    """A query left the tabulated coefficient grid."""


class ConfigError(ErgodiffError):
    """Experiment configuration failed validation."""


class IOFailure(ErgodiffError):
    """Report emission could not write its files."""


class PSDRepairWarning(UserWarning):
    """Eigenvalue clipping removed a non-negligible negative part."""


class StiffnessWarning(UserWarning):
    """The explicit slow-variable update saw large increments too often."""
