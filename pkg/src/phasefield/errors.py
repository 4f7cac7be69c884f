"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class PhaseFieldError(Exception):
    """Base class for all errors raised by :mod:`phasefield`."""


class NonHermitianInput(PhaseFieldError, ValueError):
    pass


class NonZeroMean(PhaseFieldError, ValueError):
    pass


class GridMismatch(PhaseFieldError, ValueError):
    pass


class MissingAdvection(PhaseFieldError, ValueError):
    pass


class WrongKind(PhaseFieldError, ValueError):
    pass


class Diverged(PhaseFieldError, FloatingPointError):
    """A non-finite value appeared in the solution."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite values in solution at step {step}")


class NewtonDiverged(PhaseFieldError, RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Newton iteration did not converge after {iterations} iterations "
            f"(final residual {residual:.3e})"
        )


class LinearSolveDiverged(PhaseFieldError, RuntimeError):
    pass


class IterationStalled(PhaseFieldError, RuntimeError):
    pass


class ClearanceViolation(UserWarning):
    """Warning: a shape does not keep the 8*eps clearance from the cell boundary."""


class EmptyContour(PhaseFieldError, ValueError):
    pass


class EmptyInput(PhaseFieldError, ValueError):
    pass


class ConfigError(PhaseFieldError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ValidationError(ConfigError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


class UnknownKey(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown configuration key {key!r}")
