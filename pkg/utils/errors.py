from typing import Any, Dict, Optional, Sequence


class PlateDualError(Exception):
    """Base class for every failure raised by the toolkit"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class StencilError(PlateDualError):
    """Grid too small for the finite-difference stencils"""


class ParameterError(PlateDualError):
    """Nonpositive material constant, K, eps3 out of range and similar"""


class InversionError(PlateDualError):
    """Singular tensor on the symmetric subspace"""


class BStarViolation(PlateDualError):
    """N + K*delta is not positive definite at some node"""

    def __init__(self, node_index: int, eigenvalues: Sequence[float], K: float):
        self.node_index = int(node_index)
        self.eigenvalues = [float(value) for value in eigenvalues]
        self.K = float(K)
        super().__init__(
            f"N + K*delta not positive definite at node {self.node_index} "
            f"(eigenvalues {self.eigenvalues}, K={self.K}); try a larger K",
            {"node_index": self.node_index, "eigenvalues": self.eigenvalues, "K": self.K},
        )


class CertificateError(PlateDualError):
    """Coercivity certificate failed its divergence or definiteness check"""


class SolverStallError(PlateDualError):
    """Line search could not find sufficient decrease"""

    def __init__(self, iteration: int, value: float, grad_norm: float, step: float):
        super().__init__(
            f"Line search stalled at iteration {iteration}: J={value:.6e}, "
            f"grad_norm={grad_norm:.3e}, last step={step:.3e}",
            {"iteration": iteration, "value": value, "grad_norm": grad_norm, "step": step},
        )


class LinearSolverError(PlateDualError):
    """Sparse solve failed or missed its residual target"""


class KSelectionError(PlateDualError):
    """Sampled J2* is not strictly positive for the current K"""


class ConfigError(PlateDualError):
    """Scenario configuration is missing a field or inconsistent"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}", {"field": field})
