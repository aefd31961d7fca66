from typing import Dict, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import settings
from models.fields import ScalarField2, SymTensorField2, VectorField2


class DualPoint(BaseModel):
    """v* = (N, Q, M_tilde) with multiplier z*; B* asks N + K*delta positive definite at every node"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    N: SymTensorField2 = Field(..., description="Membrane forces")
    Q: VectorField2 = Field(..., description="Shear-like multiplier")
    M_tilde: SymTensorField2 = Field(..., description="Shifted moments")
    z_star: ScalarField2 = Field(..., description="Scalar multiplier field")
    K: float = Field(..., gt=0.0)

    @property
    def grid(self):
        return self.N.grid

    @classmethod
    def zeros(cls, grid, K: float = 1.0) -> "DualPoint":
        zero = np.zeros(grid.shape)
        return cls(
            N=SymTensorField2.zeros(grid),
            Q=VectorField2(grid=grid, c1=zero, c2=zero),
            M_tilde=SymTensorField2.zeros(grid),
            z_star=ScalarField2(grid=grid, values=zero),
            K=K,
        )

    def flat(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(N, Q, M_tilde, z*) as flat stacks of shape (3, n), (2, n), (3, n), (n,)"""
        n = self.grid.n_nodes
        return (
            self.N.stacked().reshape(3, n),
            np.stack([self.Q.c1.ravel(), self.Q.c2.ravel()]),
            self.M_tilde.stacked().reshape(3, n),
            self.z_star.values.ravel(),
        )

    @classmethod
    def from_flat(cls, grid, N: np.ndarray, Q: np.ndarray, M_tilde: np.ndarray, z: np.ndarray, K: float) -> "DualPoint":
        shape = grid.shape
        return cls(
            N=SymTensorField2(grid=grid, t11=N[0].reshape(shape), t22=N[1].reshape(shape), t12=N[2].reshape(shape)),
            Q=VectorField2(grid=grid, c1=Q[0].reshape(shape), c2=Q[1].reshape(shape)),
            M_tilde=SymTensorField2(
                grid=grid, t11=M_tilde[0].reshape(shape), t22=M_tilde[1].reshape(shape), t12=M_tilde[2].reshape(shape)
            ),
            z_star=ScalarField2(grid=grid, values=np.asarray(z).reshape(shape)),
            K=K,
        )


class KPolicy(BaseModel):
    mode: Literal["auto", "fixed"] = Field(..., description="auto: K = 1 + ||N(u0)||_inf, doubled on failure")
    value: Optional[float] = Field(None, gt=0.0, description="K for the fixed policy")

    @model_validator(mode="after")
    def _validate(self) -> "KPolicy":
        if self.mode == "fixed" and self.value is None:
            raise ValueError("fixed K policy needs a value")
        return self


class DualityOptions(BaseModel):
    """Sample counts and constants for the duality checks"""

    eps3: float = Field(settings.EPS3, gt=0.0, lt=1.0, description="C0 scaling, any value in (0, 1)")
    j2_samples: int = Field(settings.J2_SAMPLES, ge=1)
    weak_duality_trials: int = Field(settings.WEAK_DUALITY_TRIALS, ge=0)
    concavity_directions: int = Field(settings.CONCAVITY_DIRECTIONS, ge=0)
    sup_inf_samples: int = Field(settings.SUP_INF_SAMPLES, ge=0)
    fenchel_young_samples: int = Field(settings.FENCHEL_YOUNG_SAMPLES, ge=0)
    max_K_doublings: int = Field(settings.MAX_K_DOUBLINGS, ge=0)


class ProbeResult(BaseModel):
    evaluated: int
    skipped: int = 0
    violations: int
    worst: float = Field(..., description="Largest measured excess over the bound (negative is slack)")
    tolerance: float


class DualReport(BaseModel):
    """Duality checks at the extracted point"""

    K: float
    K_attempts: int = 1
    b_star_margin: float
    j_primal: float
    j_star: float
    gap: float
    j1_value: float
    residual_membrane: float
    residual_moment: float
    residual_moment_literal: float = Field(..., description="div2 M_tilde - div Q - P, Laplacian-consistency diagnostic")
    L_norm: float
    weak_duality_violations: int
    j2_min_sampled: float
    stationarity: Dict[str, float] = Field(default_factory=dict)
    z_relation: float = Field(..., description="max |z* + K w0|")
    laplacian_consistency: Dict[str, float] = Field(default_factory=dict)
    fenchel_equalities: Dict[str, float] = Field(default_factory=dict)
    fenchel_young_min_slack: Optional[float] = None
    concavity: Optional[ProbeResult] = None
    sup_inf: Optional[ProbeResult] = None
    weak_duality: Optional[ProbeResult] = None
