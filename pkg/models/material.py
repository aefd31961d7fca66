import math
from typing import ClassVar, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

SQRT2 = math.sqrt(2.0)


class LameParams(BaseModel):
    """Plate material: Lame constants and thickness"""

    model_config = ConfigDict(frozen=True)

    lambda_h: float = Field(..., description="Lame constant lambda^h")
    mu_h: float = Field(..., description="Lame constant mu^h")
    thickness_h: float = Field(..., description="Plate thickness h")


class PairBasisTensor(BaseModel):
    """
    Fourth-order tensor with major and minor symmetries, stored in the Mandel (Kelvin) basis

    A symmetric tensor t maps to the vector (t11, t22, sqrt2*t12) in 2D and
    (t11, t22, t33, sqrt2*t23, sqrt2*t13, sqrt2*t12) in 3D. Matrix entries are the
    index-form entries times 1, sqrt2 or 2, so E:T:E is e.T @ M @ e and the inverse on the
    symmetric subspace is the plain matrix inverse.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pairs: ClassVar[List[Tuple[int, int]]] = []

    matrix: np.ndarray = Field(..., description="Pair-basis matrix in the Mandel convention")
    is_inverse: bool = Field(False, description="True when this is the inverse of a stiffness tensor")

    @model_validator(mode="after")
    def _validate(self) -> "PairBasisTensor":
        size = len(self.pairs)
        if self.matrix.shape != (size, size):
            raise ValueError(f"pair-basis matrix must be {size}x{size}, got {self.matrix.shape}")
        return self

    @classmethod
    def pair_factors(cls) -> np.ndarray:
        return np.array([1.0 if a == b else SQRT2 for a, b in cls.pairs])

    @classmethod
    def slot_scale(cls, k: int, l: int) -> float:
        """Exact product of the Mandel factors of two slots: 1, sqrt2 or 2"""
        shear = int(cls.pairs[k][0] != cls.pairs[k][1]) + int(cls.pairs[l][0] != cls.pairs[l][1])
        return (1.0, SQRT2, 2.0)[shear]

    @classmethod
    def pair_index(cls, a: int, b: int) -> int:
        """Slot of the unordered 1-based index pair (a, b)"""
        key = (min(a, b) - 1, max(a, b) - 1)
        for slot, pair in enumerate(cls.pairs):
            if tuple(sorted(pair)) == key:
                return slot
        raise IndexError(f"no slot for index pair ({a}, {b})")

    def entry(self, a: int, b: int, c: int, d: int) -> float:
        """Index-form entry T_abcd (1-based indices)"""
        k, l = self.pair_index(a, b), self.pair_index(c, d)
        return float(self.matrix[k, l] / self.slot_scale(k, l))

    def index_form(self) -> np.ndarray:
        dim = 2 if len(self.pairs) == 3 else 3
        full = np.zeros((dim,) * 4)
        for a in range(1, dim + 1):
            for b in range(1, dim + 1):
                for c in range(1, dim + 1):
                    for d in range(1, dim + 1):
                        full[a - 1, b - 1, c - 1, d - 1] = self.entry(a, b, c, d)
        return full


class ConstitutiveTensor4_2D(PairBasisTensor):
    pairs: ClassVar[List[Tuple[int, int]]] = [(0, 0), (1, 1), (0, 1)]


class ElasticTensor4_3D(PairBasisTensor):
    pairs: ClassVar[List[Tuple[int, int]]] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]

    c0: Optional[float] = Field(None, description="Certified smallest eigenvalue")
    c1: Optional[float] = Field(None, description="Worst sampled quartic ratio")


class ElasticTensorSpec(BaseModel):
    """Scenario entry for the 3D tensor: isotropic Lame pair or an explicit Mandel matrix"""

    kind: Literal["isotropic", "matrix"] = "isotropic"
    lambda_: Optional[float] = Field(None, alias="lambda")
    mu: Optional[float] = None
    matrix: Optional[List[List[float]]] = None

    model_config = ConfigDict(populate_by_name=True)
