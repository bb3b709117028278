"""Semantic exception hierarchy shared by all smallgain modules."""


class SmallGainError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SmallGainError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(SmallGainError):
    """A configuration value, grid, or run file is malformed."""


class InsufficientDataError(SmallGainError):
    """A signal tail is too short for the requested estimate."""


class DimensionMismatchError(SmallGainError):
    """Signal and set dimensions disagree."""


class InvalidStageError(SmallGainError):
    """A cascade stage violates its structural assumptions."""


class ModelingError(SmallGainError):
    """A propagated interval escapes a stage's admissible input range."""

    def __init__(self, message: str, stage_index: int | None = None):
        super().__init__(message)
        self.stage_index = stage_index


class InvarianceViolationError(SmallGainError):
    """An integrated state left its invariant interval by more than the
    clamping tolerance."""

    def __init__(self, message: str, stage_index: int, time: float):
        super().__init__(message)
        self.stage_index = stage_index
        self.time = time
