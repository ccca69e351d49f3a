"""
Observable Transport Lab Errors
Exception hierarchy shared by the solvers, the experiment runner and the CLI
"""

from typing import Any, Dict, List, Optional


# ============================================================================
# EXIT CODES
# ============================================================================

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_ACCEPTANCE = 3


# ============================================================================
# BASE
# ============================================================================

class LabError(Exception):
    """Base class for every error raised by the lab"""

    exit_code = EXIT_SOLVER

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Serialize for summary reports"""
        return {
            'error': type(self).__name__,
            'message': self.message,
            'exit_code': self.exit_code,
            'details': self.details,
        }


# ============================================================================
# CONFIGURATION
# ============================================================================

class ValidationFailure(LabError):
    """Experiment config failed validation; carries every problem found"""

    exit_code = EXIT_VALIDATION

    def __init__(self, errors: List[Dict[str, str]]):
        lines = [f"{e['field']}: {e['message']}" for e in errors]
        super().__init__('Invalid experiment config:\n  ' + '\n  '.join(lines), {'errors': errors})
        self.errors = errors


# ============================================================================
# SOLVER ERRORS
# ============================================================================

class SolverError(LabError):
    """Numerical failure inside a solver or verifier"""


class DomainError(SolverError, ValueError):
    """Input outside the mathematical domain of an operation"""


class PreconditionError(SolverError, ValueError):
    """Operation precondition violated (grid, step size, sample count)"""


class ResolutionError(SolverError, ValueError):
    """Grid spacing too coarse to resolve the filter scale"""


class KernelEvaluationError(SolverError):
    """Kernel returned a non-finite value"""

    def __init__(self, abscissa: float, value: float):
        super().__init__(
            f'Kernel evaluation is not finite at x={abscissa!r} (value={value!r})',
            {'abscissa': abscissa, 'value': value},
        )
        self.abscissa = abscissa


class CaseError(SolverError):
    """Operation requested for the wrong Riemann case"""


class CrossingError(SolverError):
    """Particle positions lost strict monotonicity"""

    def __init__(self, time: float, index: int):
        super().__init__(
            f'Particle crossing detected at t={time:.6g} between particles {index} and {index + 1}',
            {'time': time, 'index': index},
        )
        self.time = time
        self.index = index


class ExtrapolationError(SolverError):
    """Map inversion requested outside the particle hull"""


class BlowupError(SolverError):
    """Characteristic evaluated at or past its blow-up time"""


class DeterminacyError(SolverError):
    """Characteristic left the domain of determinacy"""


class ConvergenceError(SolverError):
    """Fixed-point iteration hit its iteration cap"""


class PrecisionError(SolverError):
    """Quadrature could not reach the requested tolerance"""

    def __init__(self, message: str, achieved: float, requested: float):
        super().__init__(message, {'achieved': achieved, 'requested': requested})
        self.achieved = achieved
        self.requested = requested


class InstabilityError(SolverError):
    """Non-finite values appeared during time stepping"""


class UnsupportedKernelError(SolverError):
    """Operation is only derived for a specific kernel"""


class PresetError(SolverError, KeyError):
    """Unknown preset name"""

    def __str__(self) -> str:
        return self.message


# ============================================================================
# ACCEPTANCE
# ============================================================================

class AcceptanceFailure(LabError):
    """A run completed but one of its pass flags is false"""

    exit_code = EXIT_ACCEPTANCE
