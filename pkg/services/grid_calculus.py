import logging
from typing import List, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from models.fields import ScalarField2
from models.grid import EDGES_2D, FACES_3D, Grid2, Grid3
from utils.errors import ConfigError, StencilError
from utils.operator_cache import cached

logger = logging.getLogger(__name__)

ArrayOrField = Union[np.ndarray, ScalarField2]


def first_difference_matrix(n: int, h: float) -> sp.csr_matrix:
    """
    Second-order first derivative on n uniformly spaced nodes

    Central differences inside, one-sided three-point stencils at both ends.
    """
    if n < 3:
        raise StencilError(f"first differences need at least 3 nodes, got {n}")
    D = sp.lil_matrix((n, n))
    D[0, 0:3] = [-3.0, 4.0, -1.0]
    D[n - 1, n - 3:n] = [1.0, -4.0, 3.0]
    for i in range(1, n - 1):
        D[i, i - 1] = -1.0
        D[i, i + 1] = 1.0
    return (D.tocsr() / (2.0 * h)).tocsr()


def second_difference_matrix(n: int, h: float) -> sp.csr_matrix:
    """
    Second derivative: 3-point inside, one-sided 4-point second-order stencils at both ends
    """
    if n < 4:
        raise StencilError(f"second differences need at least 4 nodes, got {n}")
    D = sp.lil_matrix((n, n))
    D[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
    D[n - 1, n - 4:n] = [-1.0, 4.0, -5.0, 2.0]
    for i in range(1, n - 1):
        D[i, i - 1:i + 2] = [1.0, -2.0, 1.0]
    return (D.tocsr() / (h * h)).tocsr()


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


class PlateOperators:
    """Sparse difference operators and quadrature weights for one Grid2, acting on C-order flat arrays"""

    def __init__(self, grid: Grid2):
        self.grid = grid
        ix, iy = sp.identity(grid.nx, format="csr"), sp.identity(grid.ny, format="csr")
        d1x, d1y = first_difference_matrix(grid.nx, grid.hx), first_difference_matrix(grid.ny, grid.hy)
        d2x, d2y = second_difference_matrix(grid.nx, grid.hx), second_difference_matrix(grid.ny, grid.hy)

        self.D1 = sp.kron(d1x, iy, format="csr")
        self.D2 = sp.kron(ix, d1y, format="csr")
        self.D11 = sp.kron(d2x, iy, format="csr")
        self.D22 = sp.kron(ix, d2y, format="csr")
        # One matrix serves both orders, so mixed derivatives commute bit for bit
        self.D12 = sp.kron(d1x, d1y, format="csr")

        self.D1T = self.D1.T.tocsr()
        self.D2T = self.D2.T.tocsr()
        self.D11T = self.D11.T.tocsr()
        self.D22T = self.D22.T.tocsr()
        self.D12T = self.D12.T.tocsr()

        self.weights = np.kron(trapezoid_weights(grid.nx, grid.hx), trapezoid_weights(grid.ny, grid.hy))

    def grad(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.D1 @ f, self.D2 @ f

    def hessian(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(f,11, f,22, f,12) as flat arrays"""
        return self.D11 @ f, self.D22 @ f, self.D12 @ f

    def weak_divergence(self, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
        """W-adjoint divergence: <f, div q>_W = -<grad f, q>_W for every nodal f"""
        W = self.weights
        return -(self.D1T @ (W * q1) + self.D2T @ (W * q2)) / W

    def weak_double_divergence(self, s11: np.ndarray, s22: np.ndarray, s12: np.ndarray) -> np.ndarray:
        """W-adjoint of the Hessian: <f, div2 S>_W = <hess f, S>_W with S symmetric"""
        W = self.weights
        return (self.D11T @ (W * s11) + self.D22T @ (W * s22) + 2.0 * (self.D12T @ (W * s12))) / W


class BoxOperators:
    """First-difference operators and quadrature weights for one Grid3"""

    def __init__(self, grid: Grid3):
        self.grid = grid
        counts = grid.shape
        spacings = grid.spacings
        identities = [sp.identity(n, format="csr") for n in counts]
        self.D: List[sp.csr_matrix] = []
        for axis in range(3):
            factors = list(identities)
            factors[axis] = first_difference_matrix(counts[axis], spacings[axis])
            self.D.append(sp.kron(sp.kron(factors[0], factors[1]), factors[2], format="csr"))
        self.DT = [D.T.tocsr() for D in self.D]
        wx, wy, wz = (trapezoid_weights(n, h) for n, h in zip(counts, spacings))
        self.weights = np.kron(np.kron(wx, wy), wz)


def plate_operators(grid: Grid2) -> PlateOperators:
    return cached(("plate_operators",) + grid.key(), lambda: PlateOperators(grid))


def box_operators(grid: Grid3) -> BoxOperators:
    return cached(("box_operators",) + grid.key(), lambda: BoxOperators(grid))


def _values(f: ArrayOrField, grid: Grid2) -> np.ndarray:
    values = f.values if isinstance(f, ScalarField2) else np.asarray(f, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    return values


def diff1(f: ScalarField2, axis: int) -> ScalarField2:
    """First derivative along axis 1 (x) or 2 (y)"""
    ops = plate_operators(f.grid)
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    D = ops.D1 if axis == 1 else ops.D2
    return ScalarField2(grid=f.grid, values=(D @ f.values.ravel()).reshape(f.grid.shape))


def diff2(f: ScalarField2, a: int, b: int) -> ScalarField2:
    """Second derivative f,ab; the mixed derivative is symmetric in (a, b)"""
    ops = plate_operators(f.grid)
    pair = tuple(sorted((a, b)))
    if pair == (1, 1):
        D = ops.D11
    elif pair == (2, 2):
        D = ops.D22
    elif pair == (1, 2):
        D = ops.D12
    else:
        raise ValueError(f"invalid derivative indices ({a}, {b})")
    return ScalarField2(grid=f.grid, values=(D @ f.values.ravel()).reshape(f.grid.shape))


def integrate_domain(f: ScalarField2) -> float:
    """Trapezoidal quadrature over the grid, exact for bilinear integrands"""
    ops = plate_operators(f.grid)
    return float(ops.weights @ f.values.ravel())


def boundary_weights(grid: Grid2, part: str) -> np.ndarray:
    """Flat per-node trapezoid weights along every edge carrying the requested label"""
    if part not in ("Gamma0", "GammaT", "All"):
        raise ConfigError(f"unknown boundary part '{part}'")

    def build() -> np.ndarray:
        weights = np.zeros(grid.shape)
        wx = trapezoid_weights(grid.nx, grid.hx)
        wy = trapezoid_weights(grid.ny, grid.hy)
        edges = EDGES_2D if part == "All" else grid.edges_with(part)
        for edge in edges:
            if edge == "west":
                weights[0, :] += wy
            elif edge == "east":
                weights[-1, :] += wy
            elif edge == "south":
                weights[:, 0] += wx
            else:
                weights[:, -1] += wx
        return weights.ravel()

    return cached(("boundary_weights", part) + grid.key(), build)


def integrate_boundary(f: ArrayOrField, part: str, grid: Grid2 = None) -> Tuple[float, bool]:
    """
    Trapezoidal line integral of nodal boundary values over Gamma0, GammaT or All

    Returns (value, empty); an empty part integrates to 0 with empty=True.
    """
    grid = f.grid if isinstance(f, ScalarField2) else grid
    if grid is None:
        raise ValueError("a grid is required when integrating a bare array")
    if part != "All" and not grid.edges_with(part):
        logger.debug(f"Boundary part {part} is empty on this grid")
        return 0.0, True
    weights = boundary_weights(grid, part)
    return float(weights @ _values(f, grid).ravel()), False


def single_face_weights(grid: Grid3, face: str) -> np.ndarray:
    """Flat per-node 2D trapezoid weights on one box face, zero elsewhere"""

    def build() -> np.ndarray:
        weights = np.zeros(grid.shape)
        hx, hy, hz = grid.spacings
        wx = trapezoid_weights(grid.nx, hx)
        wy = trapezoid_weights(grid.ny, hy)
        wz = trapezoid_weights(grid.nz, hz)
        if face in ("west", "east"):
            weights[0 if face == "west" else -1, :, :] = np.outer(wy, wz)
        elif face in ("south", "north"):
            weights[:, 0 if face == "south" else -1, :] = np.outer(wx, wz)
        elif face in ("bottom", "top"):
            weights[:, :, 0 if face == "bottom" else -1] = np.outer(wx, wy)
        else:
            raise ValueError(f"unknown face {face}")
        return weights.ravel()

    return cached(("single_face_weights", face) + grid.key(), build)


def face_weights(grid: Grid3, part: str) -> np.ndarray:
    """Flat per-node 2D trapezoid weights summed over every box face carrying the label"""

    def build() -> np.ndarray:
        faces = FACES_3D if part == "All" else grid.faces_with(part)
        return sum((single_face_weights(grid, face) for face in faces), np.zeros(grid.n_nodes))

    return cached(("face_weights", part) + grid.key(), build)


def cumulative_integral(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Cumulative trapezoid from the low end of the axis, zero at the first node"""
    return cumulative_trapezoid(values, dx=h, axis=axis, initial=0.0)
