"""Exception hierarchy shared across the package."""


class MacoError(Exception):
    """Base class for all package errors."""


class DimensionError(MacoError):
    """Tensor shapes are incompatible for the requested operation."""


class ParameterError(MacoError):
    """A numeric argument is outside its valid range."""


class InputError(MacoError):
    """User-supplied data (text, ids, files) is malformed."""


class StateError(MacoError):
    """An operation was requested in an invalid state (missing checkpoint, ...)."""


class MetricError(MacoError):
    """A metric is undefined for the given inputs."""


class ObjectiveError(MacoError):
    """A loss term cannot be evaluated (e.g. no masked patches)."""


class TrainingError(MacoError):
    """Optimization failed (non-finite gradients/updates)."""


class NumericalAbort(MacoError):
    """Training produced a non-finite loss and was aborted."""


class OracleError(MacoError):
    """A verification oracle could not be evaluated."""


class SceneSpecError(MacoError):
    """The synthetic-scene specification is infeasible."""


class ConfigError(MacoError):
    """A run configuration violates a documented constraint."""


class CheckpointError(MacoError):
    """A checkpoint file is missing, corrupt, or of an unknown version."""
