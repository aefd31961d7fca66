from typing import List, Literal, Optional

from pydantic import BaseModel, Field


class FieldSpec(BaseModel):
    """
    Scalar field definition evaluated on a grid

    constant: value everywhere
    polynomial: sum of coefficients[i][j] * x**i * y**j (3D: coefficients[i][j][k] * z**k)
    trig: amplitude * sin(frequency * pi * coordinate[axis])
    tabulated: nodal values in C order
    """

    kind: Literal["constant", "polynomial", "trig", "tabulated"] = "constant"
    value: float = 0.0
    coefficients: Optional[List] = None
    amplitude: float = 1.0
    axis: int = Field(1, ge=1, le=3)
    frequency: float = 1.0
    values: Optional[List[float]] = None


def _zero() -> FieldSpec:
    return FieldSpec(kind="constant", value=0.0)


class PlateLoadSpec(BaseModel):
    """Plate loads as written in a scenario file"""

    P: FieldSpec = Field(default_factory=_zero, description="Transverse load")
    P1: FieldSpec = Field(default_factory=_zero, description="In-plane load, x component")
    P2: FieldSpec = Field(default_factory=_zero, description="In-plane load, y component")
    Pt: FieldSpec = Field(default_factory=_zero, description="Transverse traction on GammaT")
    Pt1: FieldSpec = Field(default_factory=_zero, description="In-plane traction on GammaT, x")
    Pt2: FieldSpec = Field(default_factory=_zero, description="In-plane traction on GammaT, y")
    eps1: float = Field(0.0, ge=0.0, description="Spring coefficient for u1 on GammaT")
    eps2: float = Field(0.0, ge=0.0, description="Spring coefficient for u2 on GammaT")


class ElasticLoadSpec(BaseModel):
    """3D body loads, GammaT tractions and Gamma0 Dirichlet data"""

    P: List[FieldSpec] = Field(default_factory=lambda: [_zero(), _zero(), _zero()], min_length=3, max_length=3)
    Pt: List[FieldSpec] = Field(default_factory=lambda: [_zero(), _zero(), _zero()], min_length=3, max_length=3)
    u_hat: List[FieldSpec] = Field(
        default_factory=lambda: [_zero(), _zero(), _zero()], min_length=3, max_length=3,
        description="Dirichlet data imposed on Gamma0 in mixed mode",
    )
