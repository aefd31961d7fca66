from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.fields import SymTensorField2
from models.grid import Grid2

PlateMode = Literal["clamped", "mixed"]


class PlateState(BaseModel):
    """Primal plate unknown u = (u1, u2, w), each an (nx, ny) nodal array"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid2
    u1: np.ndarray
    u2: np.ndarray
    w: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "PlateState":
        for name in ("u1", "u2", "w"):
            if getattr(self, name).shape != self.grid.shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, grid is {self.grid.shape}")
        return self

    @classmethod
    def zeros(cls, grid: Grid2) -> "PlateState":
        return cls(grid=grid, u1=np.zeros(grid.shape), u2=np.zeros(grid.shape), w=np.zeros(grid.shape))

    @classmethod
    def from_vector(cls, grid: Grid2, x: np.ndarray) -> "PlateState":
        n = grid.n_nodes
        return cls(
            grid=grid,
            u1=np.array(x[:n]).reshape(grid.shape),
            u2=np.array(x[n:2 * n]).reshape(grid.shape),
            w=np.array(x[2 * n:3 * n]).reshape(grid.shape),
        )

    def pack(self) -> np.ndarray:
        """Flat vector [u1, u2, w] in C order"""
        return np.concatenate([self.u1.ravel(), self.u2.ravel(), self.w.ravel()])


class LoadSet(BaseModel):
    """Nodal plate loads; boundary tractions are read only on GammaT nodes"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid2
    P: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    Pt: np.ndarray
    Pt1: np.ndarray
    Pt2: np.ndarray
    eps1: float = Field(0.0, ge=0.0)
    eps2: float = Field(0.0, ge=0.0)

    @classmethod
    def zeros(cls, grid: Grid2) -> "LoadSet":
        zero = np.zeros(grid.shape)
        return cls(grid=grid, P=zero, P1=zero, P2=zero, Pt=zero, Pt1=zero, Pt2=zero)

    @classmethod
    def uniform(cls, grid: Grid2, P: float = 0.0, P1: float = 0.0, P2: float = 0.0) -> "LoadSet":
        zero = np.zeros(grid.shape)
        return cls(
            grid=grid,
            P=np.full(grid.shape, float(P)),
            P1=np.full(grid.shape, float(P1)),
            P2=np.full(grid.shape, float(P2)),
            Pt=zero, Pt1=zero, Pt2=zero,
        )

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(field)) for field in (self.P, self.P1, self.P2, self.Pt, self.Pt1, self.Pt2)))


class EnergyBreakdown(BaseModel):
    membrane: float = Field(..., description="Stored membrane (or 3D stored) energy")
    bending: float = Field(0.0, description="Stored bending energy")
    work: float = Field(..., description="Load pairings, domain plus GammaT")
    spring: float = Field(0.0, description="GammaT spring energy")
    total: float = Field(..., description="membrane + bending - work + spring")


class CoercivityCertificate(BaseModel):
    """Positive definite T with T_ab,b + P_a = 0, built from the in-plane loads"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    T: SymTensorField2
    C_shift: float
    min_eigenvalue: float
    divergence_residual: float
    tol_div: float


class CoercivityBound(BaseModel):
    """Lower bound of J(u) with the terms that make it up"""

    bending_floor: float = Field(..., description="c * ||w,ab||^2")
    t_quadratic: float = Field(..., description="1/2 <T, w,a w,b>")
    transverse_work: float = Field(..., description="-<w, P>")
    boundary_work: float = Field(0.0, description="Minus the GammaT traction work")
    spring: float
    membrane_conjugate_gap: float = Field(..., description="G(gamma) - <T, gamma>")
    gauss_green_remainder: float = Field(..., description="<T, sym grad u> - <P_a, u_a>")
    boundary_flux_trapezoid: float = Field(..., description="<T n, u> on GammaT by trapezoid")
    value: float

    def core(self) -> float:
        """Terms bounded below by the certificate floor"""
        return self.bending_floor + self.t_quadratic + self.transverse_work + self.membrane_conjugate_gap
