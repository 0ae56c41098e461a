"""Exception taxonomy shared across the package.

The CLI maps these to distinct exit codes; library callers can catch the
base class or a specific subtype.
"""


class StoryEvalError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(StoryEvalError):
    """An operation was called outside its documented preconditions."""


class ConfigError(StoryEvalError):
    """Invalid or inconsistent run configuration."""


class DataError(StoryEvalError):
    """Input data missing, malformed, or empty where content is required."""


class EmptyTextError(DataError):
    """Text input was empty after normalization."""


class NumericFailure(StoryEvalError):
    """A NaN or Inf appeared during computation.

    ``node`` names the operation that produced the bad value.
    """

    def __init__(self, node: str, message: str = ""):
        self.node = node
        super().__init__(message or f"non-finite value produced by '{node}'")


class UndefinedCorrelationError(StoryEvalError):
    """A rank correlation is undefined (zero rank variance in an input)."""


class StoryTooShortError(StoryEvalError):
    """A story has too few sentences for the requested perturbation."""
