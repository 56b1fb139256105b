"""Exception hierarchy shared by every module."""


class LffError(Exception):
    """Base class for all errors raised by lffattack."""


class NonFiniteError(LffError, ValueError):
    """A vector or model parameter contains NaN or Inf."""


class ZeroGradientError(LffError, ArithmeticError):
    """A gradient (or gradient estimate) is identically zero and cannot be normalized."""


class ZeroDirectionError(LffError, ArithmeticError):
    """A combined update direction cancelled exactly in every coordinate."""


class ConfigError(LffError, ValueError):
    """Invalid configuration value, unknown key, or inconsistent setting."""


class DivergenceError(LffError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, model_id=None):
        self.epoch = epoch
        self.model_id = model_id
        where = f" for model {model_id!r}" if model_id else ""
        super().__init__(f"training diverged at epoch {epoch}{where}")


class InvariantViolation(LffError, AssertionError):
    """A budget, box, or determinism invariant failed on attack outputs."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        super().__init__(f"invariant violated: {invariant}" + (f" ({detail})" if detail else ""))
