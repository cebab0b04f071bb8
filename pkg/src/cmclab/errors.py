"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by cmclab."""


class ConfigurationError(LabError):
    """Invalid parameters or configuration documents."""


class ResolutionError(LabError):
    """A band limit exceeds what the target grid can represent."""


class DomainError(LabError):
    """An argument lies outside the domain of an operation."""


class ImmersionDegenerateError(LabError):
    """The area element of a map fell below the degeneracy threshold."""


class OrientationError(LabError):
    """The enclosed volume is not positive."""


class PreconditionError(LabError):
    """An input does not satisfy a normalization the operation relies on."""


class RegimeError(LabError):
    """The input lies outside the perturbative regime around the round sphere."""


class GaugeError(LabError):
    """The parametrization is not conformal to the required tolerance."""


class SolverError(LabError):
    """An iterative linear solver did not converge."""


class ConformalizationFailedError(LabError):
    """The conformalization iteration stopped contracting."""


class OptimizationFailedError(LabError):
    """Gauge minimization did not reach stationarity.

    The best iterate found is kept on ``best`` as a ``(GaugeParams, energy,
    gradient_norm)`` tuple.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PipelineError(LabError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage, error):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error
