"""
Error hierarchy shared by the solvers, samplers and the CLI
"""
from typing import Optional


class ToolkitError(Exception):
    """Base error. `where` names the failing module.operation"""

    exit_code = 3

    def __init__(self, message: str, where: Optional[str] = None):
        self.where = where
        super().__init__(f"[{where}] {message}" if where else message)


class ConfigError(ToolkitError):
    """Malformed run configuration or flag override"""

    exit_code = 2


class DomainError(ToolkitError):
    """Input outside the domain of an operation (eta <= 0, singular H, ...)"""

    exit_code = 2


class BlockUnresolved(DomainError):
    """Discretization too coarse to give every block an index"""


class NumericalFailure(ToolkitError):
    """Eigensolver, power iteration or other numerical routine failed"""

    exit_code = 3


class NonConvergence(NumericalFailure):
    """Fixed-point iteration hit its cap before reaching the residual target"""

    def __init__(
        self,
        message: str,
        where: Optional[str] = None,
        residual: float = float("inf"),
        eta: Optional[float] = None,
        iterations: int = 0,
    ):
        self.residual = residual
        self.eta = eta
        self.iterations = iterations
        super().__init__(f"{message} (residual={residual:.3e}, eta={eta}, iterations={iterations})", where)


class AcceptanceFailure(ToolkitError):
    """One or more acceptance checks failed"""

    exit_code = 1
