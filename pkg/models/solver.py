from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class SolveOptions(BaseModel):
    """Minimizer settings"""

    grad_tol: Optional[float] = Field(None, gt=0.0, description="Sup-norm stopping threshold; None means 1e-9*(1+|J(init)|)")
    max_iters: int = Field(5000, ge=0)
    ls_backtrack: float = Field(0.5, gt=0.0, lt=1.0, description="Step reduction factor")
    ls_c1: float = Field(1e-4, gt=0.0, lt=0.5, description="Armijo sufficient-decrease constant")
    init: Literal["zero", "given"] = "zero"
    method: Literal["gradient_descent", "lbfgs"] = "lbfgs"
    memory: int = Field(10, ge=1, description="L-BFGS pair count")
    precondition: bool = Field(True, description="Use the linearized-Hessian preconditioner")
    initial_step: float = Field(1.0, gt=0.0)


class IterationRecord(BaseModel):
    iter: int
    J: float
    grad_norm: float
    step: float


class CriticalPoint(BaseModel):
    """Result of a solve; state is the flat unknown vector"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: np.ndarray
    value: float
    grad_norm: float
    grad_tol: float
    iters: int
    converged: bool
    history: List[IterationRecord] = Field(default_factory=list)


class GradcheckReport(BaseModel):
    samples: int
    max_rel_error: float
    tolerance: float
    passed: bool
    errors: List[float] = Field(default_factory=list)
