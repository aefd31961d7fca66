import logging
from typing import List, Union

import numpy as np

from models.grid import Grid2, Grid3
from models.loads import ElasticLoadSpec, FieldSpec, PlateLoadSpec
from models.plate import LoadSet
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def evaluate_field(spec: FieldSpec, grid: Union[Grid2, Grid3], name: str = "field") -> np.ndarray:
    """Nodal values of a field spec on a 2D or 3D grid"""
    coords = grid.coordinates()
    shape = grid.shape
    if spec.kind == "constant":
        return np.full(shape, float(spec.value))
    if spec.kind == "trig":
        if spec.axis > len(coords):
            raise ConfigError(f"axis {spec.axis} does not exist on a {len(coords)}D grid", f"{name}.axis")
        return spec.amplitude * np.sin(spec.frequency * np.pi * coords[spec.axis - 1])
    if spec.kind == "tabulated":
        if spec.values is None or len(spec.values) != int(np.prod(shape)):
            raise ConfigError(f"tabulated field needs {int(np.prod(shape))} values", f"{name}.values")
        return np.asarray(spec.values, dtype=float).reshape(shape)
    if spec.coefficients is None:
        raise ConfigError("polynomial field needs coefficients", f"{name}.coefficients")
    coefficients = np.asarray(spec.coefficients, dtype=float)
    if coefficients.ndim != len(coords):
        raise ConfigError(
            f"polynomial coefficients must be a {len(coords)}-level nested list", f"{name}.coefficients"
        )
    values = np.zeros(shape)
    for index, coefficient in np.ndenumerate(coefficients):
        if coefficient == 0.0:
            continue
        term = np.full(shape, coefficient)
        for power, coordinate in zip(index, coords):
            term = term * coordinate ** power
        values += term
    return values


def build_load_set(spec: PlateLoadSpec, grid: Grid2) -> LoadSet:
    return LoadSet(
        grid=grid,
        P=evaluate_field(spec.P, grid, "loads.P"),
        P1=evaluate_field(spec.P1, grid, "loads.P1"),
        P2=evaluate_field(spec.P2, grid, "loads.P2"),
        Pt=evaluate_field(spec.Pt, grid, "loads.Pt"),
        Pt1=evaluate_field(spec.Pt1, grid, "loads.Pt1"),
        Pt2=evaluate_field(spec.Pt2, grid, "loads.Pt2"),
        eps1=spec.eps1,
        eps2=spec.eps2,
    )


def build_elastic_fields(spec: ElasticLoadSpec, grid: Grid3) -> dict:
    """Body loads, tractions and Dirichlet data as lists of three nodal arrays"""
    def components(specs: List[FieldSpec], label: str) -> List[np.ndarray]:
        return [evaluate_field(item, grid, f"loads3d.{label}[{i}]") for i, item in enumerate(specs)]

    return {
        "P": components(spec.P, "P"),
        "Pt": components(spec.Pt, "Pt"),
        "u_hat": components(spec.u_hat, "u_hat"),
    }
