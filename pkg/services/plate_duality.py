import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import splu
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from models.dual import DualityOptions, DualPoint, DualReport, KPolicy, ProbeResult
from models.fields import ScalarField2, SymTensorField2, VectorField2
from models.grid import Grid2
from models.material import ConstitutiveTensor4_2D
from models.plate import LoadSet, PlateState
from services.constitutive import contract_arrays, invert_sym4, nk_inverse_arrays, nk_margin, quadratic_form
from services.grid_calculus import plate_operators
from services.plate_energy import PlateProblem, admissible_masks, gamma
from utils import sampling
from utils.errors import BStarViolation, KSelectionError, LinearSolverError, ParameterError
from utils.operator_cache import cached

logger = logging.getLogger(__name__)

C0_RESIDUAL_TOL = 1e-10

# (dN, dQ, dM_tilde) as flat stacks of shape (3, n), (2, n), (3, n)
Direction = Tuple[np.ndarray, np.ndarray, np.ndarray]


# Pointwise helpers on flat (3, n) stacks in (11, 22, 12) order

def _sym_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]


def _contract(T: ConstitutiveTensor4_2D, stack: np.ndarray) -> np.ndarray:
    return np.stack(contract_arrays(T, stack[0], stack[1], stack[2]))


def _quad(T: ConstitutiveTensor4_2D, stack: np.ndarray) -> np.ndarray:
    return quadratic_form(T, stack[0], stack[1], stack[2])


def _shifted(M_tilde: np.ndarray, z: np.ndarray) -> np.ndarray:
    """M_tilde + z* delta"""
    return np.stack([M_tilde[0] + z, M_tilde[1] + z, M_tilde[2]])


def _check_K(K: float) -> None:
    if K <= 0.0:
        raise ParameterError(f"K must be positive, got {K}")


def _check_eps3(eps3: float) -> None:
    if not 0.0 < eps3 < 1.0:
        raise ParameterError(f"eps3 must lie in (0, 1), got {eps3}")


def interior_free_masks(grid: Grid2) -> Tuple[np.ndarray, np.ndarray]:
    """Flat masks of nodes off the boundary and unconstrained, for u and for w"""
    u_fixed, w_fixed = admissible_masks(grid)
    boundary = grid.boundary_mask()
    return (~u_fixed & ~boundary).ravel(), (~w_fixed & ~boundary).ravel()


def _sup(values: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    selected = values if mask is None else values[..., mask]
    return float(np.max(np.abs(selected))) if selected.size else 0.0


def membrane_forces(u: PlateState, H: ConstitutiveTensor4_2D) -> np.ndarray:
    """N = H:gamma(u) as a flat (3, n) stack"""
    return _contract(H, gamma(u).stacked().reshape(3, -1))


# Extraction

def extract_dual(u0: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D, K: float) -> DualPoint:
    """
    Dual point of a primal critical point

    z* = -K w0, M_tilde = h:(w0,ab) - z* delta, N = H:gamma(u0), Q_a = N_ab w0,b + K w0,a.
    Raises BStarViolation where N + K delta is not positive definite.
    """
    _check_K(K)
    grid = u0.grid
    ops = plate_operators(grid)
    w = u0.w.ravel()
    g1, g2 = ops.grad(w)
    Mhat = _contract(h, np.stack(ops.hessian(w)))
    z = -K * w
    M_tilde = np.stack([Mhat[0] - z, Mhat[1] - z, Mhat[2]])
    N = membrane_forces(u0, H)
    Q = np.stack([N[0] * g1 + N[2] * g2 + K * g1, N[2] * g1 + N[1] * g2 + K * g2])
    nk_inverse_arrays(N[0], N[1], N[2], K)
    logger.info(f"Extracted dual point with K={K:.6g}, B* margin {nk_margin(N[0], N[1], N[2], K):.3e}")
    return DualPoint.from_flat(grid, N, Q, M_tilde, z, K)


# Conjugate functionals

def _g1(M_tilde: np.ndarray, z: np.ndarray, h_inv: ConstitutiveTensor4_2D, W: np.ndarray) -> float:
    return 0.5 * float(W @ _quad(h_inv, _shifted(M_tilde, z)))


def _g2(N: np.ndarray, Q: np.ndarray, K: float, H_inv: ConstitutiveTensor4_2D, W: np.ndarray) -> float:
    i11, i22, i12 = nk_inverse_arrays(N[0], N[1], N[2], K)
    shear = i11 * Q[0] * Q[0] + 2.0 * i12 * Q[0] * Q[1] + i22 * Q[1] * Q[1]
    return 0.5 * float(W @ shear) + 0.5 * float(W @ _quad(H_inv, N))


def _f(z: np.ndarray, K: float, grid: Grid2) -> float:
    _check_K(K)
    ops = plate_operators(grid)
    z1, z2 = ops.grad(z)
    return float(ops.weights @ (z1 * z1 + z2 * z2)) / (2.0 * K)


def g1_star(M_tilde: SymTensorField2, z_star: ScalarField2, h_inv: ConstitutiveTensor4_2D) -> float:
    """1/2 <hbar (M_tilde + z* delta), M_tilde + z* delta>"""
    ops = plate_operators(M_tilde.grid)
    return _g1(M_tilde.stacked().reshape(3, -1), z_star.values.ravel(), h_inv, ops.weights)


def g2_star(N: SymTensorField2, Q: VectorField2, K: float, H_inv: ConstitutiveTensor4_2D) -> float:
    """1/2 <(N + K delta)^-1 Q, Q> + 1/2 <Hbar N, N>"""
    _check_K(K)
    ops = plate_operators(N.grid)
    Q_flat = np.stack([Q.c1.ravel(), Q.c2.ravel()])
    return _g2(N.stacked().reshape(3, -1), Q_flat, K, H_inv, ops.weights)


def f_star(z_star: ScalarField2, K: float) -> float:
    """(1 / 2K) ||grad z*||^2"""
    return _f(z_star.values.ravel(), K, z_star.grid)


def _j_star(N, Q, M_tilde, z, K, grid, H_inv, h_inv) -> float:
    W = plate_operators(grid).weights
    return -_g1(M_tilde, z, h_inv, W) - _g2(N, Q, K, H_inv, W) + _f(z, K, grid)


def j_star(v: DualPoint, H_inv: ConstitutiveTensor4_2D, h_inv: ConstitutiveTensor4_2D) -> float:
    """J* = -G1* - G2* + F*"""
    N, Q, M_tilde, z = v.flat()
    return _j_star(N, Q, M_tilde, z, v.K, v.grid, H_inv, h_inv)


# L operator and C0

def _L(M_tilde: np.ndarray, z: np.ndarray, h_inv: ConstitutiveTensor4_2D, grid: Grid2) -> np.ndarray:
    ops = plate_operators(grid)
    s = _contract(h_inv, _shifted(M_tilde, z))
    return ops.D22 @ s[0] - ops.D11 @ s[1]


def L_operator(v: DualPoint, h_inv: ConstitutiveTensor4_2D) -> ScalarField2:
    """(hbar_11lm S_lm),22 - (hbar_22lm S_lm),11 with S = M_tilde + z* delta"""
    _, _, M_tilde, z = v.flat()
    return ScalarField2(grid=v.grid, values=_L(M_tilde, z, h_inv, v.grid).reshape(v.grid.shape))


def c0_free_mask(grid: Grid2) -> np.ndarray:
    """Nodes at least two layers from the boundary; the clamped fourth-order rows fix the rest"""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[2:-2, 2:-2] = True
    return mask.ravel()


def _c0_system(grid: Grid2, h_inv: ConstitutiveTensor4_2D):
    def build():
        ops = plate_operators(grid)
        a1111 = h_inv.entry(1, 1, 1, 1)
        a1122 = h_inv.entry(1, 1, 2, 2)
        a2222 = h_inv.entry(2, 2, 2, 2)
        A = a2222 * (ops.D11 @ ops.D11) - 2.0 * a1122 * (ops.D11 @ ops.D22) + a1111 * (ops.D22 @ ops.D22)
        free = c0_free_mask(grid)
        block = A.tocsr()[free][:, free].tocsc()
        try:
            lu = splu(block)
        except RuntimeError as e:
            raise LinearSolverError(f"C0 factorization failed: {e}")
        logger.debug(f"Factorized C0 operator on {int(free.sum())} nodes")
        return block, free, lu

    return cached(("c0",) + grid.key() + (h_inv.matrix.tobytes(),), build)


def _c0(y: np.ndarray, grid: Grid2, h_inv: ConstitutiveTensor4_2D, eps3: float) -> np.ndarray:
    _check_eps3(eps3)
    block, free, lu = _c0_system(grid, h_inv)
    rhs = y[free]
    out = np.zeros_like(y, dtype=float)
    if not np.any(rhs):
        return out
    x = lu.solve(rhs)
    x -= lu.solve(block @ x - rhs)
    residual = float(np.linalg.norm(block @ x - rhs))
    scale = float(np.linalg.norm(rhs)) + float(np.linalg.norm(abs(block) @ np.abs(x)))
    if residual > C0_RESIDUAL_TOL * scale:
        raise LinearSolverError(
            f"C0 solve residual {residual:.3e} above {C0_RESIDUAL_TOL:.0e} x {scale:.3e}",
            {"residual": residual, "scale": scale},
        )
    out[free] = (1.0 - eps3) * x
    return out


def c0_apply(y: ScalarField2, h_inv: ConstitutiveTensor4_2D, eps3: float) -> ScalarField2:
    """
    (1 - eps3) times the inverse of hbar2222 D1111 - 2 hbar1122 D1122 + hbar1111 D2222

    The fourth-order equation is solved on nodes at least two layers inside with w and its normal
    difference clamped; the result is zero elsewhere.
    """
    return ScalarField2(grid=y.grid, values=_c0(y.values.ravel(), y.grid, h_inv, eps3).reshape(y.grid.shape))


def biharmonic_forward(w: ScalarField2, h_inv: ConstitutiveTensor4_2D) -> ScalarField2:
    """The operator C0 inverts, applied to w restricted to the C0 nodes"""
    block, free, _ = _c0_system(w.grid, h_inv)
    out = np.zeros(w.grid.n_nodes)
    out[free] = block @ w.values.ravel()[free]
    return ScalarField2(grid=w.grid, values=out.reshape(w.grid.shape))


def _c0_pairing(L: np.ndarray, grid: Grid2, h_inv: ConstitutiveTensor4_2D, eps3: float) -> float:
    return 0.5 * float(plate_operators(grid).weights @ (_c0(L, grid, h_inv, eps3) * L))


def _j1_star(N, Q, M_tilde, z, K, grid, H_inv, h_inv, eps3) -> float:
    L = _L(M_tilde, z, h_inv, grid)
    return _j_star(N, Q, M_tilde, z, K, grid, H_inv, h_inv) + _c0_pairing(L, grid, h_inv, eps3)


def j1_star(v: DualPoint, H_inv: ConstitutiveTensor4_2D, h_inv: ConstitutiveTensor4_2D, eps3: float) -> float:
    """J* + 1/2 <C0 L, L>"""
    N, Q, M_tilde, z = v.flat()
    return _j1_star(N, Q, M_tilde, z, v.K, v.grid, H_inv, h_inv, eps3)


def _j2_star(z: np.ndarray, K: float, grid: Grid2, h_inv: ConstitutiveTensor4_2D, eps3: float) -> float:
    zero = np.zeros((3, grid.n_nodes))
    W = plate_operators(grid).weights
    L0 = _L(zero, z, h_inv, grid)
    return -_g1(zero, z, h_inv, W) + _c0_pairing(L0, grid, h_inv, eps3) + _f(z, K, grid)


def j2_star(z_star: ScalarField2, K: float, h_inv: ConstitutiveTensor4_2D, eps3: float) -> float:
    """-1/2 <hbar z* delta, z* delta> + 1/2 <C0 L0, L0> + F*(z*), with L0 taken at M_tilde = 0"""
    return _j2_star(z_star.values.ravel(), K, z_star.grid, h_inv, eps3)


# Equilibrium

def _equilibrium_fields(N, Q, M_tilde, z, grid: Grid2, loads: LoadSet):
    """A1 = div_h N + P_a and A2 = div2_h(M_tilde + z* delta) - div_h(Q + grad_h z*) - P, nodewise"""
    ops = plate_operators(grid)
    A1 = np.stack([
        ops.weak_divergence(N[0], N[2]) + loads.P1.ravel(),
        ops.weak_divergence(N[2], N[1]) + loads.P2.ravel(),
    ])
    S = _shifted(M_tilde, z)
    z1, z2 = ops.grad(z)
    A2 = ops.weak_double_divergence(S[0], S[1], S[2]) - ops.weak_divergence(Q[0] + z1, Q[1] + z2) - loads.P.ravel()
    return A1, A2


def equilibrium_residuals(v: DualPoint, loads: LoadSet) -> Tuple[float, float]:
    """Interior free-node sup-norms of the membrane and moment equilibrium residuals"""
    N, Q, M_tilde, z = v.flat()
    A1, A2 = _equilibrium_fields(N, Q, M_tilde, z, v.grid, loads)
    u_free, w_free = interior_free_masks(v.grid)
    return _sup(A1, u_free), _sup(A2, w_free)


def j3_star(v: DualPoint, u: PlateState, loads: LoadSet, H_inv: ConstitutiveTensor4_2D,
            h_inv: ConstitutiveTensor4_2D) -> float:
    """J* + <w, A2> - <u_a, A1_a>"""
    N, Q, M_tilde, z = v.flat()
    W = plate_operators(v.grid).weights
    A1, A2 = _equilibrium_fields(N, Q, M_tilde, z, v.grid, loads)
    multipliers = float(W @ (u.w.ravel() * A2)) - float(W @ (u.u1.ravel() * A1[0] + u.u2.ravel() * A1[1]))
    return _j_star(N, Q, M_tilde, z, v.K, v.grid, H_inv, h_inv) + multipliers


# Extracted-point identities

def stationarity_residuals(v0: DualPoint, u0: PlateState, loads: LoadSet, H_inv: ConstitutiveTensor4_2D,
                           h_inv: ConstitutiveTensor4_2D) -> Dict[str, float]:
    """Sup-norms of the variations of J3* in M_tilde, Q, N, z* and u at (v0, u0)"""
    grid = v0.grid
    ops = plate_operators(grid)
    W = ops.weights
    N, Q, M_tilde, z = v0.flat()
    K = v0.K
    u1, u2, w = u0.u1.ravel(), u0.u2.ravel(), u0.w.ravel()
    g1, g2 = ops.grad(w)
    hess = np.stack(ops.hessian(w))
    S = _shifted(M_tilde, z)
    hS = _contract(h_inv, S)

    i11, i22, i12 = nk_inverse_arrays(N[0], N[1], N[2], K)
    a1 = i11 * Q[0] + i12 * Q[1]
    a2 = i12 * Q[0] + i22 * Q[1]
    HN = _contract(H_inv, N)
    strain = np.stack([
        ops.D1 @ u1 + 0.5 * a1 * a1,
        ops.D2 @ u2 + 0.5 * a2 * a2,
        0.5 * (ops.D2 @ u1 + ops.D1 @ u2) + 0.5 * a1 * a2,
    ])

    y1, y2 = ops.grad(z / K + w)
    r_z = -(hS[0] + hS[1]) + (hess[0] + hess[1]) + (ops.D1T @ (W * y1) + ops.D2T @ (W * y2)) / W

    A1, A2 = _equilibrium_fields(N, Q, M_tilde, z, grid, loads)
    u_free, w_free = interior_free_masks(grid)
    return {
        "M_tilde": _sup(hess - hS),
        "Q": _sup(np.stack([g1 - a1, g2 - a2])),
        "N": _sup(strain - HN),
        "z_star": _sup(r_z),
        "u": max(_sup(A1, u_free), _sup(A2, w_free)),
    }


def laplacian_consistency(v0: DualPoint, u0: PlateState, loads: LoadSet) -> Dict[str, float]:
    """
    Diagnostics comparing the 3-point Laplacian with the adjoint-form one

    laplacian_mismatch and z_strong_relation are measured three or more layers inside, where both
    are second-order approximations; moment_literal is div2_h M_tilde - div_h Q - P on interior free nodes.
    """
    grid = v0.grid
    ops = plate_operators(grid)
    N, Q, M_tilde, z = v0.flat()
    deep = np.zeros(grid.shape, dtype=bool)
    deep[3:-3, 3:-3] = True
    deep = deep.ravel()
    z1, z2 = ops.grad(z)
    laplacian = ops.D11 @ z + ops.D22 @ z
    mismatch = laplacian - ops.weak_divergence(z1, z2)
    y = z / v0.K + u0.w.ravel()
    strong = -(ops.D11 @ y + ops.D22 @ y)
    literal = (ops.weak_double_divergence(M_tilde[0], M_tilde[1], M_tilde[2])
               - ops.weak_divergence(Q[0], Q[1]) - loads.P.ravel())
    _, w_free = interior_free_masks(grid)
    return {
        "laplacian_mismatch": _sup(mismatch, deep),
        "z_strong_relation": _sup(strong, deep),
        "moment_literal": _sup(literal, w_free),
    }


def fenchel_equalities(v0: DualPoint, u0: PlateState, H: ConstitutiveTensor4_2D,
                       h: ConstitutiveTensor4_2D) -> Dict[str, float]:
    """Relative defects of the three Legendre equalities at the extracted point"""
    grid = v0.grid
    ops = plate_operators(grid)
    W = ops.weights
    H_inv, h_inv = invert_sym4(H), invert_sym4(h)
    N, Q, M_tilde, z = v0.flat()
    K = v0.K
    u1, u2, w = u0.u1.ravel(), u0.u2.ravel(), u0.w.ravel()
    g1, g2 = ops.grad(w)
    hess = np.stack(ops.hessian(w))
    S = _shifted(M_tilde, z)

    g1s = _g1(M_tilde, z, h_inv, W)
    g1_primal = 0.5 * float(W @ _quad(h, hess))
    pairing1 = float(W @ _sym_dot(hess, S))

    e = np.stack([ops.D1 @ u1, ops.D2 @ u2, 0.5 * (ops.D2 @ u1 + ops.D1 @ u2)])
    g2s = _g2(N, Q, K, H_inv, W)
    g2_primal = _g2_primal(e, g1, g2, K, H, W)
    pairing2 = float(W @ _sym_dot(e, N)) + float(W @ (g1 * Q[0] + g2 * Q[1]))

    fs = _f(z, K, grid)
    z1, z2 = ops.grad(z)
    f_primal = 0.5 * K * float(W @ (g1 * g1 + g2 * g2))
    pairing3 = float(W @ (g1 * z1 + g2 * z2))

    def relative(defect: float, *terms: float) -> float:
        return abs(defect) / (1.0 + max(abs(t) for t in terms))

    return {
        "G1": relative(g1s - (pairing1 - g1_primal), g1s, pairing1, g1_primal),
        "G2": relative(g2s - (pairing2 - g2_primal), g2s, pairing2, g2_primal),
        "F": relative(fs + pairing3 + f_primal, fs, pairing3, f_primal),
    }


def _g2_primal(e: np.ndarray, g1: np.ndarray, g2: np.ndarray, K: float, H: ConstitutiveTensor4_2D,
               W: np.ndarray) -> float:
    """1/2 <H gamma, gamma> + K/2 ||g||^2 with gamma = e + g g / 2"""
    gam = np.stack([e[0] + 0.5 * g1 * g1, e[1] + 0.5 * g2 * g2, e[2] + 0.5 * g1 * g2])
    return 0.5 * float(W @ _quad(H, gam)) + 0.5 * K * float(W @ (g1 * g1 + g2 * g2))


def duality_gap(u0: PlateState, v0: DualPoint, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D,
                loads: LoadSet) -> float:
    """|J(u0) - J*(v0)| / (1 + |J(u0)|)"""
    J = PlateProblem(u0.grid, H, h, loads, "clamped").energy(u0.pack())
    J_star = j_star(v0, invert_sym4(H), invert_sym4(h))
    return abs(J - J_star) / (1.0 + abs(J))


# Probes

def _sample_generators(seed: int, count: int) -> List[np.random.Generator]:
    """One independent generator per sample, so each sample is reproducible on its own"""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def weak_duality_probe(v0: DualPoint, u0: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D,
                       loads: LoadSet, trial_count: int, seed: int = 0) -> ProbeResult:
    """
    Check J*(v0) <= J(u) + K/2 ||grad(w - w0)||^2 over random admissible u

    Trials alternate between perturbations of u0 and states centered at zero, with amplitudes
    spread over four decades.
    """
    grid = u0.grid
    problem = PlateProblem(grid, H, h, loads, "clamped")
    ops = problem.ops
    W = ops.weights
    K = v0.K
    x0 = u0.pack()
    w0 = u0.w.ravel()
    J0 = problem.energy(x0)
    J_star = j_star(v0, invert_sym4(H), invert_sym4(h))
    tolerance = 1e-8 * (1.0 + abs(J0))
    reference = 1.0 + float(np.max(np.abs(x0)))
    amplitudes = np.logspace(-4, 0, max(trial_count, 1))

    violations = 0
    worst = -np.inf
    for i, rng in enumerate(_sample_generators(seed, trial_count)):
        d = sampling.admissible_plate_vector(grid, problem.fixed, rng)
        a = amplitudes[i] * reference
        x = x0 + a * d if i % 2 == 0 else a * d
        _, _, w = problem.split(x)
        y1, y2 = ops.grad(w - w0)
        rhs = problem.energy(x) + 0.5 * K * float(W @ (y1 * y1 + y2 * y2))
        excess = J_star - rhs
        worst = max(worst, excess)
        if excess > tolerance:
            violations += 1
            logger.warning(f"Weak duality violated on trial {i}: excess {excess:.3e}")
    logger.info(f"Weak duality probe: {violations} violations in {trial_count} trials")
    return ProbeResult(
        evaluated=trial_count, violations=violations,
        worst=float(worst) if trial_count else 0.0, tolerance=tolerance,
    )


def _random_direction(grid: Grid2, rng: np.random.Generator, n_scale: float) -> Direction:
    def field() -> np.ndarray:
        return sampling.cosine_field(grid, rng).ravel()

    dN = n_scale * np.stack([field(), field(), field()])
    dQ = np.stack([field(), field()])
    dM = np.stack([field(), field(), field()])
    return dN, dQ, dM


def concavity_probe(base: DualPoint, directions: Union[int, Sequence[Direction]], eps3: float,
                    H_inv: ConstitutiveTensor4_2D, h_inv: ConstitutiveTensor4_2D,
                    seed: int = 0, step: float = 1e-2) -> ProbeResult:
    """
    Second differences of J1* along directions in (N, Q, M_tilde) at fixed z*

    An integer asks for that many random smooth directions, with the N part sized to stay inside
    B*. Directions whose probe points leave B* are skipped.
    """
    grid = base.grid
    N, Q, M_tilde, z = base.flat()
    K = base.K
    margin = nk_margin(N[0], N[1], N[2], K)
    if isinstance(directions, int):
        n_scale = 0.25 * margin / step
        directions = [_random_direction(grid, rng, n_scale) for rng in _sample_generators(seed, directions)]

    center = _j1_star(N, Q, M_tilde, z, K, grid, H_inv, h_inv, eps3)
    evaluated = skipped = violations = 0
    worst = -np.inf
    tolerance = 0.0
    for index, (dN, dQ, dM) in enumerate(directions):
        try:
            plus = _j1_star(N + step * dN, Q + step * dQ, M_tilde + step * dM, z, K, grid, H_inv, h_inv, eps3)
            minus = _j1_star(N - step * dN, Q - step * dQ, M_tilde - step * dM, z, K, grid, H_inv, h_inv, eps3)
        except BStarViolation:
            skipped += 1
            logger.warning(f"Concavity direction {index} leaves B*; skipped")
            continue
        second = plus - 2.0 * center + minus
        local_tol = 1e-10 * (1.0 + max(abs(plus), abs(center), abs(minus)))
        tolerance = max(tolerance, local_tol)
        worst = max(worst, second)
        evaluated += 1
        if second > local_tol:
            violations += 1
            logger.warning(f"Positive second difference {second:.3e} along direction {index}")
    logger.info(f"Concavity probe: {violations} positive of {evaluated} evaluated, {skipped} skipped")
    return ProbeResult(
        evaluated=evaluated, skipped=skipped, violations=violations,
        worst=float(worst) if evaluated else 0.0, tolerance=tolerance,
    )


# Self-equilibrated perturbations in adjoint form; each has zero discrete divergence at every node

def airy_membrane(grid: Grid2, phi: np.ndarray) -> np.ndarray:
    """N with div_h N = 0: W^-1 (D2'D2' W phi, D1'D1' W phi, -D1'D2' W phi)"""
    ops = plate_operators(grid)
    W = ops.weights
    Wphi = W * np.ravel(phi)
    return np.stack([
        ops.D2T @ (ops.D2T @ Wphi) / W,
        ops.D1T @ (ops.D1T @ Wphi) / W,
        -(ops.D1T @ (ops.D2T @ Wphi)) / W,
    ])


def moment_shear_pair(grid: Grid2, psi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(dM_tilde, dQ) with dM_tilde_12 = psi and div2_h dM_tilde - div_h dQ = 0"""
    ops = plate_operators(grid)
    W = ops.weights
    psi = np.ravel(psi)
    zero = np.zeros_like(psi)
    dM = np.stack([zero, zero, psi])
    dQ = np.stack([-2.0 * (ops.D2T @ (W * psi)) / W, zero])
    return dM, dQ


def moment_diagonal(grid: Grid2, xi: np.ndarray) -> np.ndarray:
    """Diagonal dM_tilde with div2_h dM_tilde = 0"""
    ops = plate_operators(grid)
    W = ops.weights
    Wxi = W * np.ravel(xi)
    return np.stack([ops.D22T @ Wxi / W, -(ops.D11T @ Wxi) / W, np.zeros_like(Wxi)])


def divergence_free_shear(grid: Grid2, chi: np.ndarray) -> np.ndarray:
    """dQ with div_h dQ = 0"""
    ops = plate_operators(grid)
    W = ops.weights
    Wchi = W * np.ravel(chi)
    return np.stack([ops.D2T @ Wchi / W, -(ops.D1T @ Wchi) / W])


def _unit_sup(stack: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(stack)))
    return stack / peak if peak > 0.0 else stack


def sup_inf_probe(v0: DualPoint, count: int, eps3: float, H_inv: ConstitutiveTensor4_2D,
                  h_inv: ConstitutiveTensor4_2D, seed: int = 0) -> ProbeResult:
    """
    J1*(v0 + d, z0*) <= J*(v0, z0*) over self-equilibrated perturbations d

    d combines an Airy membrane field, a matched (M_tilde, Q) pair, a diagonal moment field and a
    divergence-free Q field built from smooth potentials.
    """
    grid = v0.grid
    N, Q, M_tilde, z = v0.flat()
    K = v0.K
    margin = nk_margin(N[0], N[1], N[2], K)
    reference = _j_star(N, Q, M_tilde, z, K, grid, H_inv, h_inv)
    tolerance = 1e-8 * (1.0 + abs(reference))
    magnitude = 1.0 + max(_sup(Q), _sup(M_tilde))

    evaluated = skipped = violations = 0
    worst = -np.inf
    for index, rng in enumerate(_sample_generators(seed, count)):
        a = magnitude * 10.0 ** rng.uniform(-3.0, 0.0)
        dN = 0.25 * margin * rng.uniform(0.1, 1.0) * _unit_sup(airy_membrane(grid, sampling.airy_potential(grid, rng)))
        dM_pair, dQ_pair = moment_shear_pair(grid, sampling.airy_potential(grid, rng))
        pair_scale = a / max(_sup(dM_pair), 1e-300)
        dM = pair_scale * dM_pair + a * _unit_sup(moment_diagonal(grid, sampling.airy_potential(grid, rng)))
        dQ = pair_scale * dQ_pair + a * _unit_sup(divergence_free_shear(grid, sampling.airy_potential(grid, rng)))
        try:
            value = _j1_star(N + dN, Q + dQ, M_tilde + dM, z, K, grid, H_inv, h_inv, eps3)
        except BStarViolation:
            skipped += 1
            logger.warning(f"Sup-inf sample {index} leaves B*; skipped")
            continue
        excess = value - reference
        worst = max(worst, excess)
        evaluated += 1
        if excess > tolerance:
            violations += 1
            logger.warning(f"Sup-inf sample {index} exceeds J* by {excess:.3e}")
    logger.info(f"Sup-inf probe: {violations} violations of {evaluated} evaluated, {skipped} skipped")
    return ProbeResult(
        evaluated=evaluated, skipped=skipped, violations=violations,
        worst=float(worst) if evaluated else 0.0, tolerance=tolerance,
    )


def fenchel_young_probe(grid: Grid2, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D, K: float,
                        samples: int, seed: int = 0) -> float:
    """
    Smallest Fenchel-Young slack over random pairs

    G1(E) + G1*(S) - <E, S> and G2(e, g) + G2*(N, Q) - <e, N> - <g, Q>, with N + K delta
    kept positive definite.
    """
    _check_K(K)
    W = plate_operators(grid).weights
    H_inv, h_inv = invert_sym4(H), invert_sym4(h)
    n = grid.n_nodes
    lowest = np.inf
    for rng in _sample_generators(seed, samples):
        E = rng.standard_normal((3, n))
        S = rng.standard_normal((3, n))
        zero = np.zeros(n)
        slack1 = 0.5 * float(W @ _quad(h, E)) + _g1(S, zero, h_inv, W) - float(W @ _sym_dot(E, S))

        e = rng.standard_normal((3, n))
        g = rng.standard_normal((2, n))
        N = 0.3 * K * rng.uniform(-1.0, 1.0, (3, n))
        Q = rng.standard_normal((2, n))
        pairing = float(W @ _sym_dot(e, N)) + float(W @ (g[0] * Q[0] + g[1] * Q[1]))
        slack2 = _g2_primal(e, g[0], g[1], K, H, W) + _g2(N, Q, K, H_inv, W) - pairing
        lowest = min(lowest, slack1, slack2)
    logger.info(f"Fenchel-Young probe over {samples} samples: smallest slack {lowest:.3e}")
    return float(lowest) if samples else 0.0


# K selection

def _j2_samples(grid: Grid2, K: float, h_inv: ConstitutiveTensor4_2D, eps3: float, count: int, seed: int) -> float:
    """Smallest J2* over the lowest sine mode and count random resolved-mode fields"""
    _, w_fixed = admissible_masks(grid)
    fixed = w_fixed.ravel()
    X, Y = grid.coordinates()
    lowest_mode = (np.sin(np.pi * X / grid.lx) * np.sin(np.pi * Y / grid.ly)).ravel()
    lowest_mode[fixed] = 0.0
    values = [_j2_star(lowest_mode, K, grid, h_inv, eps3)]
    for rng in _sample_generators(seed, count):
        z = sampling.multiplier_sample(grid, fixed, rng) * 10.0 ** rng.uniform(-2.0, 1.0)
        values.append(_j2_star(z, K, grid, h_inv, eps3))
    return float(min(values))


def select_K(u0: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D, policy: KPolicy,
             options: Optional[DualityOptions] = None, seed: int = 0) -> Tuple[DualPoint, int, float]:
    """
    Pick K, extract the dual point and validate the J2* > 0 hypothesis

    Auto starts from 1 + ||N(u0)||_inf and doubles on each B* violation, up to max_K_doublings
    times; a fixed K is tried once. J2* never grows with K, so a non-positive sample at the first
    B*-valid K ends the search with KSelectionError. Returns (dual point, attempts, smallest sampled J2*).
    """
    options = options or DualityOptions()
    if policy.mode == "fixed":
        K0 = float(policy.value)
        attempts_allowed = 1
    else:
        K0 = 1.0 + _sup(membrane_forces(u0, H))
        attempts_allowed = options.max_K_doublings + 1

    retrying = Retrying(
        stop=stop_after_attempt(attempts_allowed),
        retry=retry_if_exception_type(BStarViolation),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    attempts = 0
    for attempt in retrying:
        with attempt:
            attempts = attempt.retry_state.attempt_number
            K = K0 * 2.0 ** (attempts - 1)
            logger.debug(f"K attempt {attempts}: K={K:.6g}")
            dual = extract_dual(u0, H, h, K)

    j2_min = _j2_samples(u0.grid, dual.K, invert_sym4(h), options.eps3, options.j2_samples, seed)
    if j2_min <= 0.0:
        raise KSelectionError(
            f"sampled J2* reaches {j2_min:.3e} <= 0 at K={dual.K:.6g}; J2* decreases with K, so a smaller K is needed",
            {"K": dual.K, "j2_min": j2_min},
        )
    logger.info(f"Selected K={dual.K:.6g} after {attempts} attempt(s); smallest sampled J2*={j2_min:.3e}")
    return dual, attempts, j2_min


# Full verification

def verify_duality(u0: PlateState, H: ConstitutiveTensor4_2D, h: ConstitutiveTensor4_2D, loads: LoadSet,
                   policy: KPolicy, options: Optional[DualityOptions] = None, seed: int = 0) -> DualReport:
    """Extract the dual point of a clamped critical point and run every duality check on it"""
    options = options or DualityOptions()
    grid = u0.grid
    H_inv, h_inv = invert_sym4(H), invert_sym4(h)
    problem = PlateProblem(grid, H, h, loads, "clamped")

    v0, attempts, j2_min = select_K(u0, H, h, policy, options, seed)
    N, Q, M_tilde, z = v0.flat()
    K = v0.K

    J = problem.energy(u0.pack())
    J_star = j_star(v0, H_inv, h_inv)
    r_membrane, r_moment = equilibrium_residuals(v0, loads)
    consistency = laplacian_consistency(v0, u0, loads)

    weak = weak_duality_probe(v0, u0, H, h, loads, options.weak_duality_trials, seed)
    concavity = concavity_probe(v0, options.concavity_directions, options.eps3, H_inv, h_inv, seed)
    sup_inf = sup_inf_probe(v0, options.sup_inf_samples, options.eps3, H_inv, h_inv, seed)

    return DualReport(
        K=K,
        K_attempts=attempts,
        b_star_margin=nk_margin(N[0], N[1], N[2], K),
        j_primal=J,
        j_star=J_star,
        gap=abs(J - J_star) / (1.0 + abs(J)),
        j1_value=j1_star(v0, H_inv, h_inv, options.eps3),
        residual_membrane=r_membrane,
        residual_moment=r_moment,
        residual_moment_literal=consistency["moment_literal"],
        L_norm=_sup(L_operator(v0, h_inv).values),
        weak_duality_violations=weak.violations,
        j2_min_sampled=j2_min,
        stationarity=stationarity_residuals(v0, u0, loads, H_inv, h_inv),
        z_relation=_sup(z + K * u0.w.ravel()),
        laplacian_consistency=consistency,
        fenchel_equalities=fenchel_equalities(v0, u0, H, h),
        fenchel_young_min_slack=fenchel_young_probe(grid, H, h, K, options.fenchel_young_samples, seed),
        concavity=concavity,
        sup_inf=sup_inf,
        weak_duality=weak,
    )
