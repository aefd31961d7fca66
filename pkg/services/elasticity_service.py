import logging
from typing import List, Sequence

import numpy as np
import scipy.sparse as sp

from models.elastic import ElasticLoadSet, ElasticMode, ElasticState, ElasticTranscript, SymTensorField3
from models.grid import FACES_3D, Grid3
from models.material import SQRT2, ElasticTensor4_3D
from models.plate import EnergyBreakdown
from services.constitutive import from_mandel3, invert_sym4, to_mandel3
from services.grid_calculus import BoxOperators, box_operators, face_weights, single_face_weights
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# Outward normal axis and sign per face
FACE_NORMALS = {
    "west": (0, -1.0), "east": (0, 1.0),
    "south": (1, -1.0), "north": (1, 1.0),
    "bottom": (2, -1.0), "top": (2, 1.0),
}


def green_strain(F: np.ndarray) -> np.ndarray:
    """v_ij = (F_ij + F_ji) / 2 + F_mi F_mj / 2 on (3, 3, n) stacks"""
    return 0.5 * (F + F.transpose(1, 0, 2)) + 0.5 * np.einsum("min,mjn->ijn", F, F)


def deformation_gradient(ops: BoxOperators, x: np.ndarray) -> np.ndarray:
    """F[i, j] = u_i,j with shape (3, 3, n)"""
    u = x.reshape(3, -1)
    return np.stack([np.stack([ops.D[j] @ u[i] for j in range(3)]) for i in range(3)])


def check_box_mode(grid: Grid3, mode: ElasticMode) -> None:
    if mode == "clamped" and grid.faces_with("GammaT"):
        raise ConfigError(
            f"clamped elasticity needs Gamma0 on every face, GammaT faces {grid.faces_with('GammaT')}",
            "grid.partition",
        )
    if mode == "mixed" and not grid.faces_with("GammaT"):
        raise ConfigError("mixed elasticity needs at least one GammaT face", "grid.partition")
    if mode not in ("clamped", "mixed"):
        raise ConfigError(f"unknown elasticity mode '{mode}'", "model")


class ElasticProblem:
    """Discrete 3D energy 1/2 <H v(u), v(u)> - <P, u> - <Pt, u>_GammaT with Dirichlet rows on Gamma0"""

    def __init__(self, grid: Grid3, H: ElasticTensor4_3D, loads: ElasticLoadSet, mode: ElasticMode = "clamped"):
        check_box_mode(grid, mode)
        self.grid = grid
        self.H = H
        self.loads = loads
        self.mode = mode
        self.ops = box_operators(grid)
        self.n = grid.n_nodes

        fixed_nodes = grid.gamma0_mask().ravel()
        self.fixed = np.tile(fixed_nodes, 3)
        self.P = loads.P.reshape(3, -1)
        self.Pt = loads.Pt.reshape(3, -1)
        self.Wt = face_weights(grid, "GammaT") if mode == "mixed" else np.zeros(self.n)
        if mode == "mixed":
            self.dirichlet = np.where(self.fixed, loads.u_hat.reshape(-1), 0.0)
        else:
            self.dirichlet = np.zeros(3 * self.n)
            if np.any(loads.u_hat):
                logger.warning("Clamped elasticity ignores the supplied u_hat")

    def split(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(3, self.n)

    def initial_state(self) -> np.ndarray:
        """u_hat extended over the whole grid in mixed mode, zero when clamped"""
        if self.mode == "mixed":
            return self.loads.u_hat.reshape(-1).copy()
        return np.zeros(3 * self.n)

    def project(self, x: np.ndarray) -> np.ndarray:
        projected = np.array(x, dtype=float)
        projected[self.fixed] = self.dirichlet[self.fixed]
        return projected

    @property
    def residual_scale(self) -> np.ndarray:
        return np.tile(self.ops.weights, 3)

    def deformation_gradient(self, x: np.ndarray) -> np.ndarray:
        return deformation_gradient(self.ops, x)

    def strain(self, x: np.ndarray) -> np.ndarray:
        return green_strain(self.deformation_gradient(x))

    def stress(self, v: np.ndarray) -> np.ndarray:
        """S = H:v with shape (3, 3, n)"""
        mandel = to_mandel3(np.moveaxis(v, -1, 0))
        return np.moveaxis(from_mandel3(mandel @ self.H.matrix.T), 0, -1)

    def breakdown(self, x: np.ndarray) -> EnergyBreakdown:
        v = self.strain(x)
        S = self.stress(v)
        W = self.ops.weights
        stored = 0.5 * float(W @ np.einsum("ijn,ijn->n", v, S))
        u = self.split(x)
        work = float(W @ np.sum(self.P * u, axis=0)) + float(self.Wt @ np.sum(self.Pt * u, axis=0))
        return EnergyBreakdown(membrane=stored, bending=0.0, work=work, spring=0.0, total=stored - work)

    def energy(self, x: np.ndarray) -> float:
        return self.breakdown(x).total

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """grad_m = sum_j D_j' (W ((I + F) S)_mj) - W P_m - Wt Pt_m, Gamma0 rows zeroed"""
        F = self.deformation_gradient(x)
        S = self.stress(green_strain(F))
        W = self.ops.weights
        first_pk = S + np.einsum("min,ijn->mjn", F, S)
        rows = []
        for m in range(3):
            row = sum(self.ops.DT[j] @ (W * first_pk[m, j]) for j in range(3))
            rows.append(row - W * self.P[m] - self.Wt * self.Pt[m])
        grad = np.concatenate(rows)
        grad[self.fixed] = 0.0
        return grad

    def linearized_hessian(self) -> sp.csr_matrix:
        """Small-strain Hessian B' (H kron W) B, used as a preconditioner"""
        D = self.ops.D
        n = self.n
        zero = sp.csr_matrix((n, n))
        half = SQRT2 / 2.0
        B = sp.bmat([
            [D[0], zero, zero],
            [zero, D[1], zero],
            [zero, zero, D[2]],
            [zero, half * D[2], half * D[1]],
            [half * D[2], zero, half * D[0]],
            [half * D[1], half * D[0], zero],
        ], format="csr")
        return (B.T @ sp.kron(sp.csr_matrix(self.H.matrix), sp.diags(self.ops.weights)) @ B).tocsr()

    def stationarity_norm(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.gradient(x) / self.residual_scale)))

    def transcript(self, x: np.ndarray, T: Sequence[np.ndarray]) -> ElasticTranscript:
        """
        J rewritten with a diagonal certificate T

        transcript = 1/2 Hvv - <T, v> + 1/2 <T, F'F> and J - transcript = <T, sym F> - work exactly;
        that remainder tends to the boundary pairing <T n, u>, which vanishes for clamped states.
        """
        W = self.ops.weights
        diagonal = [np.ravel(component) for component in T]
        F = self.deformation_gradient(x)
        v = self.strain(x)
        S = self.stress(v)
        u = self.split(x)

        stored = 0.5 * float(W @ np.einsum("ijn,ijn->n", v, S))
        t_dot_v = sum(float(W @ (diagonal[i] * v[i, i])) for i in range(3))
        t_quadratic = 0.5 * sum(float(W @ (diagonal[i] * np.sum(F[:, i] ** 2, axis=0))) for i in range(3))
        transcript = stored - t_dot_v + t_quadratic

        work = float(W @ np.sum(self.P * u, axis=0)) + float(self.Wt @ np.sum(self.Pt * u, axis=0))
        remainder = sum(float(W @ (diagonal[i] * F[i, i])) for i in range(3)) - work
        direct = stored - work

        H_inv = invert_sym4(self.H)
        t_full = np.zeros((self.n, 3, 3))
        for i in range(3):
            t_full[:, i, i] = diagonal[i]
        t_mandel = to_mandel3(t_full)
        floor = -0.5 * float(W @ np.einsum("na,ab,nb->n", t_mandel, H_inv.matrix, t_mandel))

        return ElasticTranscript(
            direct=direct,
            transcript=transcript,
            remainder=remainder,
            transcript_with_remainder=transcript + remainder,
            boundary_pairing=boundary_pairing(self.grid, diagonal, u),
            t_quadratic=t_quadratic,
            floor=floor,
        )


def boundary_pairing(grid: Grid3, diagonal: List[np.ndarray], u: np.ndarray) -> float:
    """Trapezoidal sum of T n . u over all six faces for a diagonal T"""
    total = 0.0
    for face in FACES_3D:
        axis, sign = FACE_NORMALS[face]
        total += float(single_face_weights(grid, face) @ (sign * np.ravel(diagonal[axis]) * np.ravel(u[axis])))
    return total


def strain_v(u: ElasticState) -> SymTensorField3:
    """Nonlinear strain v(u) at every node"""
    v = green_strain(deformation_gradient(box_operators(u.grid), u.pack()))
    return SymTensorField3(grid=u.grid, values=v.reshape((3, 3) + u.grid.shape))


def energy3d(u: ElasticState, H: ElasticTensor4_3D, loads: ElasticLoadSet,
             mode: ElasticMode = "clamped") -> EnergyBreakdown:
    return ElasticProblem(u.grid, H, loads, mode).breakdown(u.pack())


def gradient3d(u: ElasticState, H: ElasticTensor4_3D, loads: ElasticLoadSet,
               mode: ElasticMode = "clamped") -> ElasticState:
    return ElasticState.from_vector(u.grid, ElasticProblem(u.grid, H, loads, mode).gradient(u.pack()))


def coercivity_transcript(u: ElasticState, T: Sequence[np.ndarray], H: ElasticTensor4_3D,
                          loads: ElasticLoadSet, mode: ElasticMode = "clamped") -> ElasticTranscript:
    return ElasticProblem(u.grid, H, loads, mode).transcript(u.pack(), T)
