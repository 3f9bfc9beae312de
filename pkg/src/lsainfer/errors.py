"""Exception hierarchy shared by every module."""


class LsaInferError(Exception):
    """Base class for all library errors."""


class ValidationError(LsaInferError, ValueError):
    """Input violates a documented precondition."""


class NumericError(LsaInferError, ArithmeticError):
    """A numerical routine failed (singular system, no convergence, ...)."""


class DivergenceError(NumericError):
    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"iterate diverged at step {self.step}")


class GenerationError(LsaInferError, RuntimeError):
    """A randomized generator exhausted its retry budget."""


class PlanError(ValidationError):
    """A batch plan cannot be realised for the requested run length."""


class LengthError(ValidationError):
    def __init__(self, needed, available):
        self.needed = int(needed)
        self.available = int(available)
        super().__init__(f"stream too short: need {self.needed} iterates, got {self.available}")


class DegenerateError(ValidationError):
    """Input is degenerate for the requested statistic (e.g. K < 2, zero spread)."""


class ConsistencyError(LsaInferError, AssertionError):
    """An internal cross-check between two computations failed."""


class ConditioningWarning(UserWarning):
    """Extrapolation coefficients do not satisfy their constraints to tolerance."""
