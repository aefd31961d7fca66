from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.grid import Grid2


class _GridField(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid2

    def _check(self, *arrays: np.ndarray) -> None:
        for values in arrays:
            if np.shape(values) != self.grid.shape:
                raise ValueError(f"field shape {np.shape(values)} does not match grid {self.grid.shape}")


class ScalarField2(_GridField):
    """Nodal scalar values, shape (nx, ny)"""

    values: np.ndarray = Field(..., description="Nodal values")

    @model_validator(mode="after")
    def _validate(self) -> "ScalarField2":
        self._check(self.values)
        return self


class VectorField2(_GridField):
    """Nodal 2-vector values stored per component"""

    c1: np.ndarray
    c2: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "VectorField2":
        self._check(self.c1, self.c2)
        return self

    def components(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.c1, self.c2


class SymTensorField2(_GridField):
    """Symmetric 2x2 tensor per node stored as (t11, t22, t12); t21 is t12 by construction"""

    t11: np.ndarray
    t22: np.ndarray
    t12: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "SymTensorField2":
        self._check(self.t11, self.t22, self.t12)
        return self

    @classmethod
    def zeros(cls, grid: Grid2) -> "SymTensorField2":
        return cls(grid=grid, t11=np.zeros(grid.shape), t22=np.zeros(grid.shape), t12=np.zeros(grid.shape))

    def components(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.t11, self.t22, self.t12

    def stacked(self) -> np.ndarray:
        """Array of shape (3, nx, ny) in (11, 22, 12) order"""
        return np.stack([self.t11, self.t22, self.t12])

    def frobenius_dot(self, other: "SymTensorField2") -> np.ndarray:
        return self.t11 * other.t11 + self.t22 * other.t22 + 2.0 * self.t12 * other.t12
