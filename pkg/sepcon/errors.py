"""Exception types raised by sepcon."""

from typing import Any, Optional


class SepconError(Exception):
    """Base class for all sepcon errors."""

    kind = "runtime"


class ConfigError(SepconError, ValueError):
    """System description could not be read or parsed."""

    kind = "config"

    def __init__(
        self, message: str, line: Optional[int] = None, column: Optional[int] = None
    ):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(SepconError, ValueError):
    """A parsed system violates one of its invariants."""

    kind = "validation"

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class BudgetError(SepconError, RuntimeError):
    """An enumeration would exceed its configured budget."""

    kind = "budget"


class ImpossibleObservationError(SepconError, RuntimeError):
    """Bayes normalizer is zero: the observation cannot occur under the belief."""

    def __init__(self, stage: int, action: Any, observation: Any):
        self.stage = stage
        self.action = action
        self.observation = observation
        super().__init__(
            "impossible observation under current belief "
            f"(t={stage}, u={action}, y={observation})"
        )


class StrategyError(SepconError, RuntimeError):
    """A strategy produced no (or an infeasible) action for a reachable input."""
