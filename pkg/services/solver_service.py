import logging
from collections import deque
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from models.solver import CriticalPoint, GradcheckReport, IterationRecord, SolveOptions
from utils.errors import LinearSolverError, SolverStallError

logger = logging.getLogger(__name__)

EnergyFn = Callable[[np.ndarray], float]
GradientFn = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator], np.ndarray]

MAX_BACKTRACKS = 60
# Relative size of energy changes treated as floating-point noise by the line search
ROUNDING_NOISE = 1e-13
WOLFE_SIGMA = 0.9
# Backtracking factor once the energy change is at rounding level
FINE_BACKTRACK = 0.9


class LinearizedPreconditioner:
    """Sparse LU of a symmetric positive definite matrix restricted to the free dofs"""

    def __init__(self, matrix: sp.spmatrix, fixed: np.ndarray):
        self.free = ~np.asarray(fixed, dtype=bool)
        block = sp.csr_matrix(matrix)[self.free][:, self.free].tocsc()
        try:
            self._lu = splu(block)
        except RuntimeError as e:
            raise LinearSolverError(f"Preconditioner factorization failed: {e}")
        logger.debug(f"Factorized preconditioner on {int(self.free.sum())} free dofs")

    def apply(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(g)
        out[self.free] = self._lu.solve(g[self.free])
        return out


def _sup_norm(g: np.ndarray, scale: Optional[np.ndarray]) -> float:
    if g.size == 0:
        return 0.0
    return float(np.max(np.abs(g if scale is None else g / scale)))


def _two_loop(g: np.ndarray, pairs: deque, base: Callable[[np.ndarray], np.ndarray], scaled_identity: bool) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * float(s @ q)
        alphas.append(alpha)
        q -= alpha * y
    if scaled_identity:
        s, y, _ = pairs[-1]
        r = (float(s @ y) / float(y @ y)) * q
    else:
        r = base(q)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * float(y @ r)
        r += (alpha - beta) * s
    return r


def minimize(
    energy_fn: EnergyFn,
    gradient_fn: GradientFn,
    u_init: np.ndarray,
    opts: SolveOptions,
    scale: Optional[np.ndarray] = None,
    preconditioner: Optional[LinearizedPreconditioner] = None,
) -> CriticalPoint:
    """
    Descent with Armijo backtracking until the scaled gradient sup-norm reaches grad_tol

    gradient_fn must return a gradient with constrained rows already zeroed; those rows of the
    state never move. With method="lbfgs" the two-loop recursion uses the preconditioner (or a
    scaled identity) as its initial inverse Hessian. Once the energy change drops to rounding level a
    step that does not raise J is also accepted when it passes the approximate Wolfe slope test, and
    backtracking switches to FINE_BACKTRACK. Accepted values never increase.
    """
    x = np.array(u_init, dtype=float)
    value = float(energy_fn(x))
    g = gradient_fn(x)
    grad_norm = _sup_norm(g, scale)
    grad_tol = opts.grad_tol if opts.grad_tol is not None else 1e-9 * (1.0 + abs(value))
    history = [IterationRecord(iter=0, J=value, grad_norm=grad_norm, step=0.0)]
    pairs: deque = deque(maxlen=opts.memory)

    def base_direction(v: np.ndarray) -> np.ndarray:
        return preconditioner.apply(v) if preconditioner is not None else v.copy()

    iters = 0
    while grad_norm > grad_tol and iters < opts.max_iters:
        if opts.method == "lbfgs" and pairs:
            direction = -_two_loop(g, pairs, base_direction, preconditioner is None)
        else:
            direction = -base_direction(g)
        slope = float(g @ direction)
        if slope >= 0.0:
            pairs.clear()
            direction = -base_direction(g)
            slope = float(g @ direction)
        if slope >= 0.0:
            raise SolverStallError(iters, value, grad_norm, 0.0)

        step = opts.initial_step
        backtrack = opts.ls_backtrack
        noise = ROUNDING_NOISE * abs(value)
        candidate_grad = None
        for _ in range(MAX_BACKTRACKS + 1):
            candidate = x + step * direction
            candidate_value = float(energy_fn(candidate))
            if candidate_value <= value + opts.ls_c1 * step * slope:
                break
            # Decrease below rounding of J: accept on the approximate Wolfe slope test instead
            if candidate_value <= value + noise:
                candidate_grad = gradient_fn(candidate)
                new_slope = float(candidate_grad @ direction)
                if WOLFE_SIGMA * slope <= new_slope <= (2.0 * opts.ls_c1 - 1.0) * slope:
                    if candidate_value <= value:
                        break
                    backtrack = max(backtrack, FINE_BACKTRACK)
                candidate_grad = None
            step *= backtrack
        else:
            logger.error(f"Line search stalled at iteration {iters}")
            raise SolverStallError(iters, value, grad_norm, step)

        if candidate_grad is None:
            candidate_grad = gradient_fn(candidate)
        s = candidate - x
        y = candidate_grad - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))

        x, value, g = candidate, candidate_value, candidate_grad
        grad_norm = _sup_norm(g, scale)
        iters += 1
        history.append(IterationRecord(iter=iters, J=value, grad_norm=grad_norm, step=step))
        logger.debug(f"iter {iters}: J={value:.12e} grad_norm={grad_norm:.3e} step={step:.3e}")

    converged = grad_norm <= grad_tol
    if converged:
        logger.info(f"Converged in {iters} iterations: J={value:.12e}, grad_norm={grad_norm:.3e}")
    else:
        logger.warning(f"Not converged after {iters} iterations: grad_norm={grad_norm:.3e} > {grad_tol:.3e}")
    return CriticalPoint(
        state=x,
        value=value,
        grad_norm=grad_norm,
        grad_tol=grad_tol,
        iters=iters,
        converged=converged,
        history=history,
    )


def gradcheck(
    energy_fn: EnergyFn,
    gradient_fn: GradientFn,
    sample_count: int,
    sampler: Sampler,
    direction_sampler: Optional[Sampler] = None,
    seed: int = 0,
    step: float = 1e-5,
    tolerance: float = 1e-5,
    directions_per_state: int = 1,
) -> GradcheckReport:
    """
    Central-difference check of <grad J(u), du> at random states and directions

    Each of sample_count states is probed along directions_per_state directions. Passes iff
    every relative error is at most tolerance.
    """
    rng = np.random.default_rng(seed)
    direction_sampler = direction_sampler or sampler
    errors = []
    for _ in range(sample_count):
        x = sampler(rng)
        g = gradient_fn(x)
        for _ in range(directions_per_state):
            d = direction_sampler(rng)
            finite = (energy_fn(x + step * d) - energy_fn(x - step * d)) / (2.0 * step)
            analytic = float(g @ d)
            denominator = max(abs(analytic), 1e-300)
            errors.append(abs(finite - analytic) / denominator)
    worst = max(errors) if errors else 0.0
    passed = worst <= tolerance
    logger.info(f"Gradcheck over {len(errors)} samples: max relative error {worst:.3e} ({'PASS' if passed else 'FAIL'})")
    return GradcheckReport(samples=len(errors), max_rel_error=worst, tolerance=tolerance, passed=passed, errors=errors)
