import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from config import settings
from models.fields import SymTensorField2
from models.grid import Grid2, Grid3
from models.material import ConstitutiveTensor4_2D
from models.plate import CoercivityBound, CoercivityCertificate, LoadSet, PlateMode, PlateState
from services.constitutive import invert_sym4, min_eigenvalue, quadratic_form
from services.grid_calculus import box_operators, cumulative_integral, plate_operators, trapezoid_weights
from services.plate_energy import PlateProblem
from utils.errors import CertificateError

logger = logging.getLogger(__name__)


def divergence_slack(load: np.ndarray, axis: int) -> float:
    """
    Exact size of the gap between a central difference of the cumulative trapezoid and the load

    The difference at node i is (P[i-1] + 2 P[i] + P[i+1]) / 4, so the residual is a quarter of
    the undivided second difference of the load along the axis.
    """
    if load.shape[axis] < 3:
        return 0.0
    return 0.25 * float(np.max(np.abs(np.diff(load, n=2, axis=axis))))


def default_tol_div(loads: List[np.ndarray]) -> float:
    sup = max(float(np.max(np.abs(P))) for P in loads)
    slack = max(divergence_slack(P, axis) for axis, P in enumerate(loads))
    return 1e-8 * (1.0 + sup) + slack


def _diagonal_certificate(loads: List[np.ndarray], spacings, delta_pd: float):
    """T_ii = -cumulative integral of P_i along axis i, shifted by C so that min eig = delta_pd"""
    T_tilde = [-cumulative_integral(P, h, axis) for axis, (P, h) in enumerate(zip(loads, spacings))]
    lowest = min(float(np.min(T)) for T in T_tilde)
    C_shift = max(0.0, -lowest) + delta_pd
    return [T + C_shift for T in T_tilde], C_shift


def build_T_field(loads: LoadSet, delta_pd: float = settings.DELTA_PD, tol_div: Optional[float] = None) -> CoercivityCertificate:
    """Positive definite T with T_ab,b + P_a = 0 from the in-plane loads"""
    grid = loads.grid
    ops = plate_operators(grid)
    (T11, T22), C_shift = _diagonal_certificate([loads.P1, loads.P2], (grid.hx, grid.hy), delta_pd)
    T12 = np.zeros(grid.shape)

    r1 = ops.D1 @ T11.ravel() + ops.D2 @ T12.ravel() + loads.P1.ravel()
    r2 = ops.D1 @ T12.ravel() + ops.D2 @ T22.ravel() + loads.P2.ravel()
    residual = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    tolerance = default_tol_div([loads.P1, loads.P2]) if tol_div is None else tol_div
    lowest = float(min(np.min(T11), np.min(T22)))

    if residual > tolerance:
        raise CertificateError(
            f"divergence residual {residual:.3e} exceeds tol_div {tolerance:.3e}",
            {"residual": residual, "tol_div": tolerance},
        )
    if lowest < delta_pd * (1.0 - 1e-12):
        raise CertificateError(f"min eigenvalue {lowest:.3e} below delta_pd {delta_pd:.3e}")
    logger.info(f"Built T certificate: C_shift={C_shift:.6g}, min eig={lowest:.3e}, div residual={residual:.3e}")
    return CoercivityCertificate(
        T=SymTensorField2(grid=grid, t11=T11, t22=T22, t12=T12),
        C_shift=C_shift,
        min_eigenvalue=lowest,
        divergence_residual=residual,
        tol_div=tolerance,
    )


def _edge_flux(grid: Grid2, T: SymTensorField2, u1: np.ndarray, u2: np.ndarray, part: str) -> float:
    """Trapezoidal <T n, u> over the edges labeled part"""
    wx = trapezoid_weights(grid.nx, grid.hx)
    wy = trapezoid_weights(grid.ny, grid.hy)
    normals = {"west": (-1.0, 0.0), "east": (1.0, 0.0), "south": (0.0, -1.0), "north": (0.0, 1.0)}
    total = 0.0
    for edge in grid.edges_with(part):
        n1, n2 = normals[edge]
        flux1 = T.t11 * n1 + T.t12 * n2
        flux2 = T.t12 * n1 + T.t22 * n2
        integrand = flux1 * u1 + flux2 * u2
        if edge in ("west", "east"):
            total += float(wy @ integrand[0 if edge == "west" else -1, :])
        else:
            total += float(wx @ integrand[:, 0 if edge == "south" else -1])
    return total


def coercivity_terms(u: PlateState, cert: CoercivityCertificate, H: ConstitutiveTensor4_2D,
                     h: ConstitutiveTensor4_2D, loads: LoadSet, mode: PlateMode = "clamped") -> CoercivityBound:
    """
    Lower bound of J(u) through the certificate, term by term

    The in-plane load pairing is traded for <T, sym grad u> plus the exact discrete Gauss-Green
    remainder, whose continuum value is the boundary flux <T n, u>.
    """
    problem = PlateProblem(u.grid, H, h, loads, mode)
    W = problem.ops.weights
    x = u.pack()
    gamma, kappa, (g1, g2), (e11, e22, e12) = problem.strains(x)
    u1, u2, w = problem.split(x)
    T11, T22, T12 = (component.ravel() for component in cert.T.components())

    c = 0.5 * min_eigenvalue(h)
    bending_floor = c * float(W @ (kappa[0] ** 2 + kappa[1] ** 2 + 2.0 * kappa[2] ** 2))
    t_quadratic = 0.5 * float(W @ (T11 * g1 * g1 + T22 * g2 * g2 + 2.0 * T12 * g1 * g2))
    transverse_work = -float(W @ (w * problem.P))
    boundary_work = -float(problem.Wt @ (w * problem.Pt + u1 * problem.Pt1 + u2 * problem.Pt2))
    spring = float(problem.Wt @ (problem.eps1 * u1 * u1 + problem.eps2 * u2 * u2))
    t_dot_gamma = float(W @ (T11 * gamma[0] + T22 * gamma[1] + 2.0 * T12 * gamma[2]))
    membrane = 0.5 * float(W @ quadratic_form(H, gamma[0], gamma[1], gamma[2]))
    remainder = float(W @ (T11 * e11 + T22 * e22 + 2.0 * T12 * e12)) - float(W @ (u1 * problem.P1 + u2 * problem.P2))
    flux = _edge_flux(u.grid, cert.T, u.u1, u.u2, "GammaT") if mode == "mixed" else 0.0

    value = (bending_floor + t_quadratic + transverse_work + boundary_work + spring
             + (membrane - t_dot_gamma) + remainder)
    return CoercivityBound(
        bending_floor=bending_floor,
        t_quadratic=t_quadratic,
        transverse_work=transverse_work,
        boundary_work=boundary_work,
        spring=spring,
        membrane_conjugate_gap=membrane - t_dot_gamma,
        gauss_green_remainder=remainder,
        boundary_flux_trapezoid=flux,
        value=value,
    )


def coercivity_lower_bound(u: PlateState, cert: CoercivityCertificate, H: ConstitutiveTensor4_2D,
                           h: ConstitutiveTensor4_2D, loads: LoadSet, mode: PlateMode = "clamped") -> float:
    return coercivity_terms(u, cert, H, h, loads, mode).value


def coercivity_floor(cert: CoercivityCertificate, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D,
                     loads: LoadSet, mode: PlateMode = "clamped") -> float:
    """
    Finite floor of the bound's core terms

    G(gamma) - <T, gamma> >= -1/2 <Hbar T, T>, 1/2 <T, w,a w,b> >= 0, and
    c ||w,ab||^2 - <w, P> is minimized exactly by a sparse solve over admissible w.
    """
    problem = PlateProblem(loads.grid, H, h, loads, mode)
    ops = problem.ops
    W = ops.weights
    T11, T22, T12 = (component.ravel() for component in cert.T.components())
    membrane_floor = -0.5 * float(W @ quadratic_form(invert_sym4(H), T11, T22, T12))

    c = 0.5 * min_eigenvalue(h)
    Wd = diags(W)
    A = 2.0 * c * (ops.D11T @ Wd @ ops.D11 + ops.D22T @ Wd @ ops.D22 + 2.0 * (ops.D12T @ Wd @ ops.D12))
    free = ~problem.w_fixed
    b = (W * problem.P)[free]
    if not np.any(b):
        return membrane_floor
    solution = splu(A.tocsr()[free][:, free].tocsc()).solve(b)
    return membrane_floor - 0.5 * float(b @ solution)


# 3D certificate

def build_T3d(P: List[np.ndarray], grid: Grid3, delta_pd: float = settings.DELTA_PD,
              tol_div: Optional[float] = None) -> Tuple[List[np.ndarray], float, float, float]:
    """
    Diagonal positive definite T with T_ij,j + P_i = 0 on a box

    Returns (diagonal components, C_shift, min eigenvalue, divergence residual).
    """
    ops = box_operators(grid)
    diagonal, C_shift = _diagonal_certificate(P, grid.spacings, delta_pd)
    residual = 0.0
    for axis in range(3):
        r = ops.D[axis] @ diagonal[axis].ravel() + P[axis].ravel()
        residual = max(residual, float(np.max(np.abs(r))))
    tolerance = default_tol_div(P) if tol_div is None else tol_div
    lowest = float(min(np.min(T) for T in diagonal))
    if residual > tolerance:
        raise CertificateError(
            f"3D divergence residual {residual:.3e} exceeds tol_div {tolerance:.3e}",
            {"residual": residual, "tol_div": tolerance},
        )
    if lowest < delta_pd * (1.0 - 1e-12):
        raise CertificateError(f"3D min eigenvalue {lowest:.3e} below delta_pd {delta_pd:.3e}")
    logger.info(f"Built 3D T certificate: C_shift={C_shift:.6g}, div residual={residual:.3e}")
    return diagonal, C_shift, lowest, residual
