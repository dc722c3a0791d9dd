# utils/errors.py
"""
Exception hierarchy for g2kinetics
Every error carries the CLI exit code it maps to
"""

from typing import List, Optional, Sequence, Any


class G2KineticsError(Exception):
    """Base class for all g2kinetics errors"""
    exit_code = 1


class ConfigValidationError(G2KineticsError):
    """Run configuration or simulation configuration is invalid"""
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class PreconditionError(G2KineticsError, ValueError):
    """An operation was called with inputs outside its precondition"""
    exit_code = 2


class InvalidParameterError(G2KineticsError, ValueError):
    """A domain value violates its type invariants"""
    exit_code = 2


class PowerOutOfRangeError(InvalidParameterError):
    """Pump power outside the model validity range or yielding a negative rate"""


class UnsortedEventsError(PreconditionError):
    """Detection events are not in non-decreasing time order"""


class DegenerateSystemError(G2KineticsError, ArithmeticError):
    """Rate system has no unique stationary state or degenerate eigenvalues"""
    exit_code = 3


class NoSolutionError(G2KineticsError, ArithmeticError):
    """Observables are not realizable by any physical rate set"""
    exit_code = 3


class AmbiguousSolutionError(G2KineticsError, ArithmeticError):
    """Several physical rate sets reproduce the observables"""
    exit_code = 3

    def __init__(self, message: str, candidates: Sequence[Any] = ()):
        self.candidates: List[Any] = list(candidates)
        super().__init__(f"{message} ({len(self.candidates)} candidates)")


class UnidentifiableError(G2KineticsError, ArithmeticError):
    """A curve carries no information about the model parameters"""
    exit_code = 3


class NonConvergenceError(G2KineticsError, ArithmeticError):
    """An iterative solver stopped at its iteration cap"""
    exit_code = 3

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class CalibrationFailedError(G2KineticsError, ArithmeticError):
    """No detection efficiency makes every power point invertible"""
    exit_code = 3


class DataFileError(G2KineticsError, IOError):
    """Reading or writing a data file failed"""
    exit_code = 4
