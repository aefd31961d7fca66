"""
Independent minimizer for small clamped plate instances

For fixed w the plate energy is quadratic in (u1, u2), so each sweep solves the in-plane
block exactly and then hands the deflection block to scipy's L-BFGS-B. Slow; meant for
17 x 17 grids in the tests.
"""

import logging
from typing import Tuple

import numpy as np
from scipy.optimize import minimize as scipy_minimize
from scipy.sparse.linalg import splu

from services.plate_energy import PlateProblem

logger = logging.getLogger(__name__)


def coordinate_descent(problem: PlateProblem, tol: float = 1e-10, max_sweeps: int = 50) -> Tuple[np.ndarray, float, int]:
    """Return (state, energy, sweeps); stops when the nodal residual sup-norm reaches tol"""
    n = problem.n
    free = ~problem.fixed
    u_free, w_free = free[:2 * n], free[2 * n:]
    hessian = problem.linearized_hessian().tocsr()
    in_plane = splu(hessian[:2 * n, :2 * n][u_free][:, u_free].tocsc())
    bending = splu(hessian[2 * n:, 2 * n:][w_free][:, w_free].tocsc())

    x = np.zeros(3 * n)
    # linear plate as the starting deflection
    x[2 * n:][w_free] = -bending.solve(problem.gradient(x)[2 * n:][w_free])
    scale = max(abs(problem.energy(x)), 1e-300) if np.any(x) else 1.0

    def deflection_objective(values: np.ndarray, base: np.ndarray):
        trial = base.copy()
        trial[2 * n:][w_free] = values
        return problem.energy(trial) / scale, problem.gradient(trial)[2 * n:][w_free] / scale

    sweeps = 0
    residual = problem.stationarity_norm(x)
    while residual > tol and sweeps < max_sweeps:
        sweeps += 1
        x[:2 * n][u_free] -= in_plane.solve(problem.gradient(x)[:2 * n][u_free])
        result = scipy_minimize(
            deflection_objective, x[2 * n:][w_free].copy(), args=(x.copy(),), jac=True, method="L-BFGS-B",
            options={"maxiter": 20000, "maxcor": 30, "gtol": 1e-14, "ftol": 1e-16},
        )
        x[2 * n:][w_free] = result.x
        residual = problem.stationarity_norm(x)
        logger.debug(f"sweep {sweeps}: J={problem.energy(x):.15e} residual={residual:.3e}")

    value = problem.energy(x)
    logger.info(f"Coordinate descent: J={value:.15e} after {sweeps} sweeps, residual {residual:.3e}")
    return x, value, sweeps
