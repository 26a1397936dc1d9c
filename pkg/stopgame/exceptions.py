"""Library specific exception definitions."""
from typing import Any, Dict, List, Optional


class StopGameError(Exception):
    """The basic stopgame exception that all others inherit.
    This is done to avoid contaminating the built-in exceptions,
    which *could* lead to unintended errors being handled unexpectedly and
    incorrectly in the caller's code.
    """

    def context(self) -> Dict[str, Any]:
        """Machine-readable details attached to the error."""
        return {}


class ModelError(StopGameError):
    """Game model based exception."""


class ModelRejected(ModelError):
    """The model violates one or more standing assumptions."""

    def __init__(self, violations: List[Any]):
        """
        :param list violations:
            The :class:`Violation <Violation>` records that caused the
            rejection.
        """
        self.violations = list(violations)
        super().__init__(self.error_string)

    @property
    def error_string(self):
        if not self.violations:
            return 'model rejected'
        head = '; '.join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            head += f' (and {more} more)'
        return f'model rejected: {head}'

    def context(self) -> Dict[str, Any]:
        return {'violations': [v.as_dict() for v in self.violations]}


class ModelFileError(ModelError):
    """A model, spec or solution document could not be read."""

    def __init__(
        self, path: str, field: str, reason: str, line: Optional[int] = None
    ):
        """
        :param str path: Path of the offending document.
        :param str field: Name of the missing or malformed field.
        :param str reason: What is wrong with the field.
        :param int line: (Optional) Line of the syntax error.
        """
        self.path = path
        self.field = field
        self.reason = reason
        self.line = line
        super().__init__(self.error_string)

    @property
    def error_string(self):
        where = f'{self.path}:{self.line}' if self.line else self.path
        return f'{where}: field {self.field!r}: {self.reason}'

    def context(self) -> Dict[str, Any]:
        return {'path': self.path, 'field': self.field, 'line': self.line}


class DegenerateWeight(ModelError):
    """The weight function of a weighted norm vanishes."""

    def __init__(self, state: int):
        """
        :param int state: First state at which the weight is not positive.
        """
        self.state = state
        super().__init__(self.error_string)

    @property
    def error_string(self):
        return f'weight is not strictly positive at state {self.state}'

    def context(self) -> Dict[str, Any]:
        return {'state': self.state}


class SolverError(StopGameError):
    """Numerical solver based exception."""


class MaxIterExceeded(SolverError):
    """Maximum number of iterations exceeded."""

    def __init__(self, iterations: int, residual: float):
        """
        :param int iterations: Number of sweeps performed.
        :param float residual: Weighted step size of the last sweep.
        """
        self.iterations = iterations
        self.residual = residual
        super().__init__(self.error_string)

    @property
    def error_string(self):
        return (
            f'no convergence after {self.iterations} iterations '
            f'(last residual {self.residual:.3e})'
        )

    def context(self) -> Dict[str, Any]:
        return {'iterations': self.iterations, 'residual': self.residual}


class MonotonicityViolation(SolverError):
    """The iterates of the clamped operator lost monotonicity."""

    def __init__(self, iteration: int, state: int, drop: float):
        """
        :param int iteration: Sweep at which the violation happened.
        :param int state: Offending state.
        :param float drop: Size of the violation.
        """
        self.iteration = iteration
        self.state = state
        self.drop = drop
        super().__init__(self.error_string)

    @property
    def error_string(self):
        return (
            f'iterate moved against the monotone direction by '
            f'{self.drop:.3e} at state {self.state} '
            f'(iteration {self.iteration})'
        )

    def context(self) -> Dict[str, Any]:
        return {
            'iteration': self.iteration,
            'state': self.state,
            'drop': self.drop,
        }


class MatrixGameError(SolverError):
    """A matrix game could not be solved to certificate precision."""


class SingularSystem(SolverError):
    """The policy evaluation system could not be solved."""


class SimulationConfigError(StopGameError):
    """Invalid Monte-Carlo configuration."""


class InvalidProfile(StopGameError):
    """A strategy profile is not a valid pair of stationary strategies."""
