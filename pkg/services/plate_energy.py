import logging
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from models.fields import ScalarField2, SymTensorField2
from models.grid import Grid2
from models.material import SQRT2, ConstitutiveTensor4_2D
from models.plate import EnergyBreakdown, LoadSet, PlateMode, PlateState
from services.constitutive import from_mandel
from services.grid_calculus import boundary_weights, plate_operators
from utils.errors import ConfigError, ParameterError

logger = logging.getLogger(__name__)


def check_mode(grid: Grid2, mode: PlateMode) -> None:
    """Clamped needs every edge in Gamma0; mixed needs at least one GammaT edge"""
    if mode == "clamped" and grid.edges_with("GammaT"):
        raise ConfigError(
            f"clamped mode needs Gamma0 on every edge, GammaT edges {grid.edges_with('GammaT')}",
            "grid.partition",
        )
    if mode == "mixed" and not grid.edges_with("GammaT"):
        raise ConfigError("mixed mode needs at least one GammaT edge", "grid.partition")
    if mode not in ("clamped", "mixed"):
        raise ConfigError(f"unknown plate mode '{mode}'", "model")


def admissible_masks(grid: Grid2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Constrained-node masks (u, w) for the clamped condition on Gamma0

    u1 = u2 = w = 0 on Gamma0 nodes; w also vanishes on the first interior layer along each
    Gamma0 edge, which zeroes the normal first difference there.
    """
    u_fixed = grid.gamma0_mask()
    w_fixed = u_fixed.copy()
    for edge in grid.edges_with("Gamma0"):
        w_fixed |= grid.edge_layer_mask(edge)
    return u_fixed, w_fixed


class PlateProblem:
    """Discrete plate energy J(u) = membrane + bending - work + spring on one grid, as a function of the flat state"""

    def __init__(
        self,
        grid: Grid2,
        H: ConstitutiveTensor4_2D,
        h: ConstitutiveTensor4_2D,
        loads: LoadSet,
        mode: PlateMode = "clamped",
    ):
        check_mode(grid, mode)
        self.grid = grid
        self.H = H
        self.h = h
        self.loads = loads
        self.mode = mode
        self.ops = plate_operators(grid)
        self.n = grid.n_nodes

        u_fixed, w_fixed = admissible_masks(grid)
        self.u_fixed = u_fixed.ravel()
        self.w_fixed = w_fixed.ravel()
        self.fixed = np.concatenate([self.u_fixed, self.u_fixed, self.w_fixed])

        self.P = loads.P.ravel()
        self.P1 = loads.P1.ravel()
        self.P2 = loads.P2.ravel()
        if mode == "mixed":
            self.Wt = boundary_weights(grid, "GammaT")
        else:
            self.Wt = np.zeros(self.n)
        self.Pt = loads.Pt.ravel()
        self.Pt1 = loads.Pt1.ravel()
        self.Pt2 = loads.Pt2.ravel()
        self.eps1 = loads.eps1
        self.eps2 = loads.eps2
        if mode == "mixed" and (self.eps1 <= 0.0 or self.eps2 <= 0.0):
            logger.warning("Mixed plate mode with a zero spring coefficient; the coercivity bound needs eps > 0")

    # State plumbing

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        return x[:n], x[n:2 * n], x[2 * n:]

    def project(self, x: np.ndarray) -> np.ndarray:
        projected = np.array(x, dtype=float)
        projected[self.fixed] = 0.0
        return projected

    @property
    def residual_scale(self) -> np.ndarray:
        """Quadrature weights per dof; gradient / scale is the nodal residual"""
        return np.tile(self.ops.weights, 3)

    # Strains and resultants

    def strains(self, x: np.ndarray):
        u1, u2, w = self.split(x)
        ops = self.ops
        g1, g2 = ops.D1 @ w, ops.D2 @ w
        e11 = ops.D1 @ u1
        e22 = ops.D2 @ u2
        e12 = 0.5 * (ops.D2 @ u1 + ops.D1 @ u2)
        gamma = np.stack([e11 + 0.5 * g1 * g1, e22 + 0.5 * g2 * g2, e12 + 0.5 * g1 * g2])
        w11, w22, w12 = ops.hessian(w)
        kappa = -np.stack([w11, w22, w12])
        return gamma, kappa, (g1, g2), (e11, e22, e12)

    def resultants(self, gamma: np.ndarray, kappa: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """N = H:gamma and M = h:kappa as (3, n) component stacks"""
        N = np.stack(from_mandel(self.H.matrix @ _mandel(gamma)))
        M = np.stack(from_mandel(self.h.matrix @ _mandel(kappa)))
        return N, M

    # Energy and gradient

    def breakdown(self, x: np.ndarray) -> EnergyBreakdown:
        gamma, kappa, _, _ = self.strains(x)
        N, M = self.resultants(gamma, kappa)
        W = self.ops.weights
        membrane = 0.5 * float(W @ _frobenius(gamma, N))
        bending = 0.5 * float(W @ _frobenius(kappa, M))
        u1, u2, w = self.split(x)
        work = float(W @ (w * self.P + u1 * self.P1 + u2 * self.P2))
        work += float(self.Wt @ (w * self.Pt + u1 * self.Pt1 + u2 * self.Pt2))
        spring = float(self.Wt @ (self.eps1 * u1 * u1 + self.eps2 * u2 * u2))
        total = membrane + bending - work + spring
        return EnergyBreakdown(membrane=membrane, bending=bending, work=work, spring=spring, total=total)

    def energy(self, x: np.ndarray) -> float:
        return self.breakdown(x).total

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Exact gradient of the discrete energy with constrained rows zeroed"""
        ops = self.ops
        W = ops.weights
        gamma, kappa, (g1, g2), _ = self.strains(x)
        N, M = self.resultants(gamma, kappa)
        n11, n22, n12 = W * N[0], W * N[1], W * N[2]
        m11, m22, m12 = W * M[0], W * M[1], W * M[2]
        u1, u2, _ = self.split(x)

        grad_u1 = ops.D1T @ n11 + ops.D2T @ n12 - W * self.P1 - self.Wt * self.Pt1
        grad_u2 = ops.D2T @ n22 + ops.D1T @ n12 - W * self.P2 - self.Wt * self.Pt2
        grad_u1 += 2.0 * self.eps1 * self.Wt * u1
        grad_u2 += 2.0 * self.eps2 * self.Wt * u2
        grad_w = ops.D1T @ (n11 * g1 + n12 * g2) + ops.D2T @ (n12 * g1 + n22 * g2)
        grad_w -= ops.D11T @ m11 + ops.D22T @ m22 + 2.0 * (ops.D12T @ m12)
        grad_w -= W * self.P + self.Wt * self.Pt
        return self.project(np.concatenate([grad_u1, grad_u2, grad_w]))

    def linearized_hessian(self) -> sp.csr_matrix:
        """Hessian of J at u = 0: membrane on (u1, u2), bending on w, springs on GammaT"""
        ops = self.ops
        n = self.n
        zero = sp.csr_matrix((n, n))
        half = SQRT2 / 2.0
        B = sp.bmat([[ops.D1, zero], [zero, ops.D2], [half * ops.D2, half * ops.D1]], format="csr")
        C = sp.vstack([-ops.D11, -ops.D22, -SQRT2 * ops.D12], format="csr")
        weights = sp.diags(ops.weights)
        A_uu = B.T @ sp.kron(sp.csr_matrix(self.H.matrix), weights) @ B
        A_uu = A_uu + sp.diags(np.concatenate([2.0 * self.eps1 * self.Wt, 2.0 * self.eps2 * self.Wt]))
        A_ww = C.T @ sp.kron(sp.csr_matrix(self.h.matrix), weights) @ C
        return sp.block_diag([A_uu, A_ww], format="csr")

    def stationarity_norm(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.gradient(x) / self.residual_scale)))


def _mandel(stack: np.ndarray) -> np.ndarray:
    return np.stack([stack[0], stack[1], SQRT2 * stack[2]])


def _frobenius(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]


def _sym(grid: Grid2, stack: np.ndarray) -> SymTensorField2:
    return SymTensorField2(
        grid=grid,
        t11=stack[0].reshape(grid.shape),
        t22=stack[1].reshape(grid.shape),
        t12=stack[2].reshape(grid.shape),
    )


def gamma(u: PlateState) -> SymTensorField2:
    """gamma_ab = (u_a,b + u_b,a) / 2 + w,a w,b / 2"""
    ops = plate_operators(u.grid)
    u1, u2, w = u.u1.ravel(), u.u2.ravel(), u.w.ravel()
    g1, g2 = ops.D1 @ w, ops.D2 @ w
    stack = np.stack([
        ops.D1 @ u1 + 0.5 * g1 * g1,
        ops.D2 @ u2 + 0.5 * g2 * g2,
        0.5 * (ops.D2 @ u1 + ops.D1 @ u2) + 0.5 * g1 * g2,
    ])
    return _sym(u.grid, stack)


def kappa(u: PlateState) -> SymTensorField2:
    """kappa_ab = -w,ab"""
    ops = plate_operators(u.grid)
    return _sym(u.grid, -np.stack(ops.hessian(u.w.ravel())))


def moments(u: PlateState, h: ConstitutiveTensor4_2D) -> SymTensorField2:
    """M = h:kappa"""
    k = kappa(u)
    M = np.stack(from_mandel(h.matrix @ _mandel(k.stacked().reshape(3, -1))))
    return _sym(u.grid, M)


def kl_displacement(u: PlateState, x3: float, thickness: float) -> Tuple[ScalarField2, ScalarField2, ScalarField2]:
    """3D Kirchhoff-Love displacement at height x3: (u_a - x3 w,a, w)"""
    if abs(x3) > 0.5 * thickness:
        raise ParameterError(f"x3={x3} lies outside the plate thickness {thickness}")
    ops = plate_operators(u.grid)
    w = u.w.ravel()
    shape = u.grid.shape
    hat1 = u.u1 - x3 * (ops.D1 @ w).reshape(shape)
    hat2 = u.u2 - x3 * (ops.D2 @ w).reshape(shape)
    return (
        ScalarField2(grid=u.grid, values=hat1),
        ScalarField2(grid=u.grid, values=hat2),
        ScalarField2(grid=u.grid, values=np.array(u.w)),
    )


def energy(u: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D,
           loads: LoadSet, mode: PlateMode = "clamped") -> EnergyBreakdown:
    return PlateProblem(u.grid, H, h, loads, mode).breakdown(u.pack())


def gradient(u: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D,
             loads: LoadSet, mode: PlateMode = "clamped") -> PlateState:
    """Gradient of the discrete energy, shaped like the state"""
    return PlateState.from_vector(u.grid, PlateProblem(u.grid, H, h, loads, mode).gradient(u.pack()))
