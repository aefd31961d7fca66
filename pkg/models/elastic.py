from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.grid import Grid3

ElasticMode = Literal["clamped", "mixed"]


class ElasticState(BaseModel):
    """Displacement u = (u1, u2, u3) on a box grid, each an (nx, ny, nz) array"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid3
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "ElasticState":
        for name in ("u1", "u2", "u3"):
            if getattr(self, name).shape != self.grid.shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, grid is {self.grid.shape}")
        return self

    @classmethod
    def zeros(cls, grid: Grid3) -> "ElasticState":
        return cls(grid=grid, u1=np.zeros(grid.shape), u2=np.zeros(grid.shape), u3=np.zeros(grid.shape))

    @classmethod
    def from_vector(cls, grid: Grid3, x: np.ndarray) -> "ElasticState":
        n = grid.n_nodes
        return cls(
            grid=grid,
            u1=np.array(x[:n]).reshape(grid.shape),
            u2=np.array(x[n:2 * n]).reshape(grid.shape),
            u3=np.array(x[2 * n:3 * n]).reshape(grid.shape),
        )

    def pack(self) -> np.ndarray:
        return np.concatenate([self.u1.ravel(), self.u2.ravel(), self.u3.ravel()])


class ElasticLoadSet(BaseModel):
    """Body load P, GammaT traction Pt and Gamma0 Dirichlet data u_hat, each of shape (3, nx, ny, nz)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid3
    P: np.ndarray
    Pt: np.ndarray
    u_hat: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "ElasticLoadSet":
        expected = (3,) + self.grid.shape
        for name in ("P", "Pt", "u_hat"):
            if getattr(self, name).shape != expected:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {expected}")
        return self

    @classmethod
    def zeros(cls, grid: Grid3) -> "ElasticLoadSet":
        zero = np.zeros((3,) + grid.shape)
        return cls(grid=grid, P=zero, Pt=zero, u_hat=zero)

    @classmethod
    def uniform(cls, grid: Grid3, P=(0.0, 0.0, 0.0)) -> "ElasticLoadSet":
        body = np.stack([np.full(grid.shape, float(value)) for value in P])
        zero = np.zeros((3,) + grid.shape)
        return cls(grid=grid, P=body, Pt=zero, u_hat=zero)

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(self.P)), np.max(np.abs(self.Pt))))


class SymTensorField3(BaseModel):
    """Symmetric 3x3 tensor per node, stored in full as shape (3, 3, nx, ny, nz)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid3
    values: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "SymTensorField3":
        if self.values.shape != (3, 3) + self.grid.shape:
            raise ValueError(f"tensor field has shape {self.values.shape}")
        return self

    def component(self, i: int, j: int) -> np.ndarray:
        """1-based component (i, j)"""
        return self.values[i - 1, j - 1]


class ElasticTranscript(BaseModel):
    """Energy rewritten through a certificate T, with the pieces that make it up"""

    direct: float = Field(..., description="J(u) evaluated directly")
    transcript: float = Field(..., description="1/2 Hvv - <T, v> + 1/2 <T, F'F>")
    remainder: float = Field(..., description="<T, sym grad u> - <P, u> - GammaT work, exact discrete")
    transcript_with_remainder: float
    boundary_pairing: float = Field(..., description="Trapezoidal <T n, u> over the whole box boundary")
    t_quadratic: float = Field(..., description="1/2 <T, F'F>, nonnegative")
    floor: float = Field(..., description="-1/2 <Hbar T, T>")
