"""Exception types shared across the package."""


class SotBtError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SotBtError):
    """A matrix or vector has an incompatible shape."""


class NumericalFailure(SotBtError):
    """An iterative numerical routine did not converge.

    Carries the hierarchy level and iteration count when raised from the
    cascade solver.
    """

    def __init__(self, message, level=None, iterations=None):
        super().__init__(message)
        self.level = level
        self.iterations = iterations


class InvalidBoundKind(SotBtError):
    """Unknown bound kind passed to the bound transcription."""


class NonFiniteEvaluation(SotBtError):
    """A user-supplied function returned NaN or infinity."""


class UnknownKind(SotBtError):
    """Unknown task kind."""


class UnsetBlackboardKey(SotBtError):
    """A Condition node read a blackboard key that was never written."""


class ParseError(SotBtError):
    """Structurally invalid tree or scenario document."""


class ValidationError(SotBtError):
    """A document parsed but violates an invariant."""


class ScenarioError(SotBtError):
    """Scenario file failed to load or validate."""
