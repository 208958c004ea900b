"""Exception hierarchy shared across the package."""


class RobustlabError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RobustlabError):
    """Operand or parameter shapes are incompatible."""


class UsageError(RobustlabError):
    """An operation was called with invalid arguments or configuration."""


class InputError(RobustlabError):
    """Input data violates a documented precondition (bad labels, duplicates...)."""


class DataFormatError(RobustlabError):
    """A file on disk does not match its expected binary/text format."""


class NonFiniteError(RobustlabError):
    """A tensor operation produced NaN or Inf."""


class DivergenceError(RobustlabError):
    """Training produced a non-finite objective.

    Carries the global step index at which the divergence was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
