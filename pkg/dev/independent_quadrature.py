"""
Gauss-Legendre energies of analytic bubble states

The plate state is u_a = b_a B, w = a B^2 with B = x(lx - x) y(ly - y); the box state is
u_i = a_i B3 with B3 the 3D bubble. Derivatives are exact closed forms and the integrals use
tensor Gauss-Legendre rules of high enough order to integrate the polynomial integrands exactly,
so the values are the continuum energies the discrete ones converge to.
"""

import logging
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from models.grid import Grid2, Grid3
from models.material import ConstitutiveTensor4_2D, ElasticTensor4_3D
from models.plate import PlateState

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 16


def gauss_rule(lengths: Sequence[float], order: int = DEFAULT_ORDER) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
    """Tensor-product nodes (meshgrid, ij) and weights on [0, l1] x ... x [0, ld]"""
    nodes, weights = roots_legendre(order)
    axes = [0.5 * length * (nodes + 1.0) for length in lengths]
    axis_weights = [0.5 * length * weights for length in lengths]
    points = np.meshgrid(*axes, indexing="ij")
    total = axis_weights[0]
    for w in axis_weights[1:]:
        total = np.multiply.outer(total, w)
    return tuple(points), total


def _bubble2(x: np.ndarray, y: np.ndarray, lx: float, ly: float) -> Dict[str, np.ndarray]:
    bx, by = x * (lx - x), y * (ly - y)
    dbx, dby = lx - 2.0 * x, ly - 2.0 * y
    return {
        "B": bx * by,
        "Bx": dbx * by,
        "By": bx * dby,
        "Bxx": -2.0 * by,
        "Byy": -2.0 * bx,
        "Bxy": dbx * dby,
    }


def plate_bubble_derivatives(x, y, lx: float, ly: float, amplitudes: Tuple[float, float, float]) -> Dict[str, np.ndarray]:
    """Values and derivatives of (u1, u2, w) = (b1 B, b2 B, a B^2)"""
    b1, b2, a = amplitudes
    d = _bubble2(np.asarray(x, dtype=float), np.asarray(y, dtype=float), lx, ly)
    B, Bx, By = d["B"], d["Bx"], d["By"]
    return {
        "u1": b1 * B, "u1_x": b1 * Bx, "u1_y": b1 * By,
        "u2": b2 * B, "u2_x": b2 * Bx, "u2_y": b2 * By,
        "w": a * B * B,
        "w_x": 2.0 * a * B * Bx,
        "w_y": 2.0 * a * B * By,
        "w_xx": 2.0 * a * (Bx * Bx + B * d["Bxx"]),
        "w_yy": 2.0 * a * (By * By + B * d["Byy"]),
        "w_xy": 2.0 * a * (Bx * By + B * d["Bxy"]),
    }


def plate_bubble_state(grid: Grid2, amplitudes: Tuple[float, float, float]) -> PlateState:
    X, Y = grid.coordinates()
    d = plate_bubble_derivatives(X, Y, grid.lx, grid.ly, amplitudes)
    return PlateState(grid=grid, u1=d["u1"], u2=d["u2"], w=d["w"])


def _full2(t11, t22, t12) -> np.ndarray:
    return np.stack([np.stack([t11, t12]), np.stack([t12, t22])])


def plate_energy_oracle(
    lx: float,
    ly: float,
    amplitudes: Tuple[float, float, float],
    H: ConstitutiveTensor4_2D,
    h: ConstitutiveTensor4_2D,
    P: Tuple[float, float, float] = (0.0, 0.0, 0.0),
    order: int = DEFAULT_ORDER,
) -> Dict[str, float]:
    """
    Continuum clamped plate energy of the bubble state under constant loads (P, P1, P2)

    Contractions use the index form of the tensors, not the pair-basis matrices.
    """
    (X, Y), weights = gauss_rule((lx, ly), order)
    d = plate_bubble_derivatives(X, Y, lx, ly, amplitudes)
    gamma = _full2(
        d["u1_x"] + 0.5 * d["w_x"] ** 2,
        d["u2_y"] + 0.5 * d["w_y"] ** 2,
        0.5 * (d["u1_y"] + d["u2_x"]) + 0.5 * d["w_x"] * d["w_y"],
    )
    kappa = -_full2(d["w_xx"], d["w_yy"], d["w_xy"])
    membrane = 0.5 * float(np.sum(weights * np.einsum("ab...,abcd,cd...->...", gamma, H.index_form(), gamma)))
    bending = 0.5 * float(np.sum(weights * np.einsum("ab...,abcd,cd...->...", kappa, h.index_form(), kappa)))
    work = float(np.sum(weights * (P[0] * d["w"] + P[1] * d["u1"] + P[2] * d["u2"])))
    logger.debug(f"Plate oracle: membrane={membrane:.12e} bending={bending:.12e} work={work:.12e}")
    return {"membrane": membrane, "bending": bending, "work": work, "total": membrane + bending - work}


def _bubble3_gradient(x, y, z, lengths) -> Tuple[np.ndarray, np.ndarray]:
    lx, ly, lz = lengths
    bx, by, bz = x * (lx - x), y * (ly - y), z * (lz - z)
    grad = np.stack([(lx - 2.0 * x) * by * bz, bx * (ly - 2.0 * y) * bz, bx * by * (lz - 2.0 * z)])
    return bx * by * bz, grad


def box_bubble_state(grid: Grid3, amplitudes: Tuple[float, float, float]) -> np.ndarray:
    """Flat (3n,) displacement u_i = a_i B3 at the grid nodes"""
    X, Y, Z = grid.coordinates()
    B, _ = _bubble3_gradient(X, Y, Z, (grid.lx, grid.ly, grid.lz))
    return np.concatenate([a * B.ravel() for a in amplitudes])


def elastic_energy_oracle(
    lengths: Tuple[float, float, float],
    amplitudes: Tuple[float, float, float],
    H: ElasticTensor4_3D,
    P: Tuple[float, float, float] = (0.0, 0.0, 0.0),
    order: int = DEFAULT_ORDER,
) -> Dict[str, float]:
    """Continuum clamped 3D energy 1/2 v:H:v - P.u of the bubble state, v = sym F + F'F/2"""
    (X, Y, Z), weights = gauss_rule(lengths, order)
    B, grad = _bubble3_gradient(X, Y, Z, lengths)
    a = np.asarray(amplitudes, dtype=float)
    F = np.einsum("i,j...->ij...", a, grad)
    v = 0.5 * (F + np.swapaxes(F, 0, 1)) + 0.5 * np.einsum("ki...,kj...->ij...", F, F)
    stored = 0.5 * float(np.sum(weights * np.einsum("ij...,ijkl,kl...->...", v, H.index_form(), v)))
    work = float(np.sum(weights * B) * float(np.dot(a, P)))
    return {"stored": stored, "work": work, "total": stored - work}
