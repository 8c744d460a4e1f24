"""Exception hierarchy shared by every module of the package."""


class HybridSddeError(Exception):
    """Base class for all errors raised by :mod:`hybrid_sdde`."""


class InvalidInputError(HybridSddeError, ValueError):
    """An argument violates the documented preconditions of an operation."""


class ModelViolationError(HybridSddeError, ValueError):
    """A model component produced a value outside its declared range."""


class NoStationaryDistributionError(HybridSddeError, ValueError):
    """The generator has no unique stationary distribution."""


class NoPositiveRootError(HybridSddeError, ValueError):
    """A rate equation has no positive root on its analytic bracket."""


class MarginViolatedError(NoPositiveRootError):
    """``J(1, delta) >= 0``: the stability margin epsilon is too large."""


class StepTooLargeError(InvalidInputError):
    """The step size makes the discrete rate function non-monotone."""


class DegenerateStudyError(HybridSddeError, ArithmeticError):
    """A log-log fit was requested on zero (or non-positive) errors."""


class StudyInvalidError(HybridSddeError, RuntimeError):
    """Too many paths blew up for a Monte Carlo study to be meaningful."""


class NumericalBlowupError(HybridSddeError, FloatingPointError):
    """The numerical state became non-finite.

    Attributes
    ----------
    step : int
        Index ``k`` of the step whose result ``X_{k+1}`` was non-finite.
    path_id : int or None
        Identifier of the offending path, when known.
    """

    def __init__(self, step, path_id=None, message=None):
        self.step = int(step)
        self.path_id = path_id
        if message is None:
            message = f"non-finite state produced at step {self.step}"
            if path_id is not None:
                message += f" (path {path_id})"
        super().__init__(message)
