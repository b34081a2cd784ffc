"""Some basic definitions"""

import enum
from typing import Any, Optional


class ProblemKind(enum.Enum):
    """Kind of 1D degenerate problem"""
    REGULARIZED = "regularized"    # -u^[2] + (A+lambda)u = f
    PLAIN = "plain"                # -x^2a u'' + (A+lambda)u = f
    PARAMETRIC = "parametric"      # -t u^[2] + (A+lambda)u = f, scaled boundary functional


class PrincipalForm(enum.Enum):
    """Form of the 2D principal part"""
    PLAIN = "plain"                # x^2a u_xx, y^2b u_yy
    REGULARIZED = "regularized"    # u^[2]_x, u^[2]_y


class Closure(enum.Enum):
    """Closure at the truncation point of the transformed half-line"""
    DIRICHLET = "dirichlet"        # u = 0
    NEUMANN = "neumann"            # u_y = 0


class OperatorVariant(enum.Enum):
    """Representation of the abstract operator A"""
    SCALAR = "scalar"
    DENSE = "dense"
    DIAGONAL = "diagonal"


class NormMethod(enum.Enum):
    """Interpolation norm evaluation method"""
    CLOSED = "closed"              # d^(1-theta) weighting
    KFUNCTIONAL = "kfunctional"    # K-functional integral


class ExitStatus(enum.IntEnum):
    """Command-line exit statuses"""
    SUCCESS = 0
    VALIDATION = 2
    SOLVER = 3
    ASSERTION = 4
    PARTIAL = 5


class DegenSolveError(Exception):
    """Base class for errors"""
    exit_status = ExitStatus.SOLVER

    def __init__(self, message: str):
        super().__init__(message)


class ValidationError(DegenSolveError):
    """Configuration or precondition failure"""
    exit_status = ExitStatus.VALIDATION

    def __init__(self, message: str, key_path: str = ""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class ExpressionError(ValidationError):
    """Expression language error"""


class ExpressionSyntaxError(ExpressionError):
    """Syntax error at a position of the source text"""
    def __init__(self, message: str, position: int, source: str = ""):
        super().__init__(f"syntax error at offset {position}: {message}")
        self.position = position
        self.source = source


class ExpressionEvaluationError(ExpressionError):
    """Unbound variable or domain error during evaluation"""
    exit_status = ExitStatus.SOLVER


class OperatorError(DegenSolveError):
    """Operator cannot be used as requested"""


class SolverError(DegenSolveError):
    """Linear or nonlinear solve failed"""


class DivergenceError(SolverError):
    """Fixed point iteration diverged"""
    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace


class AssertionFailure(DegenSolveError):
    """Exercised acceptance assertion failed"""
    exit_status = ExitStatus.ASSERTION
