"""Exception types raised across the package."""


class AoiSchedError(Exception):
    """Base class for all package errors."""


class ActionMasked(AoiSchedError, ValueError):
    """An action was requested that is not valid in the given state."""


class StateSpaceTooLarge(AoiSchedError):
    """Enumerating the state space would exceed the configured cap.

    Use simulation-only workflows (index policies, UCRL2-Whittle, SARSA-LFA,
    DQN) for instances of this size.
    """


class RviDiverged(AoiSchedError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class NotUnichain(AoiSchedError):
    def __init__(self, message, classes=()):
        super().__init__(message)
        self.classes = list(classes)


class BracketError(AoiSchedError):
    """A root/bracket search failed to find a sign change."""


class ThresholdBelowBlockLength(AoiSchedError, ValueError):
    pass


class LfaDiverged(AoiSchedError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DqnNumericFailure(AoiSchedError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScenarioError(AoiSchedError, ValueError):
    """A scenario file failed to parse or validate."""
