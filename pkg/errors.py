"""Exception hierarchy shared by the numerical modules and the CLI."""
from typing import Any, Dict, Optional


class DipolarStabError(Exception):
    """Base class for all library errors.

    Args:
        message: Human readable description
        details: Structured context serialized into result records
    """

    exit_code = 6

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class InvalidInput(DipolarStabError, ValueError):
    """A precondition of an operation was violated."""

    exit_code = 2


class ConfigError(InvalidInput):
    """Configuration file or flag could not be parsed or validated."""


class ConditionViolated(DipolarStabError):
    """Neither a + b/2 nor a - b/2 is positive, C(a,b) is undefined."""


class NoPositiveF(DipolarStabError):
    """No initialization reached a positive high-frequency energy."""


class NonConvergence(DipolarStabError):
    """An iterative solver exhausted its iteration budget."""

    exit_code = 5


class CollapseDetected(DipolarStabError):
    """The kinetic length scale fell below the resolution floor."""

    exit_code = 4


class BracketFailure(DipolarStabError):
    """Bisection could not bracket the target value."""


class UnresolvedScale(DipolarStabError):
    """A requested length scale needs a grid larger than allowed."""


class OracleMismatch(DipolarStabError):
    """A closed form disagrees with its quadrature oracle."""


class ResultsIOError(DipolarStabError):
    """A result file could not be written or read."""

    exit_code = 7
