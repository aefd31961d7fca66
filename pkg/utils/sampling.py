from typing import Callable, Optional, Union

import numpy as np

from models.grid import Grid2, Grid3


def bubble(grid: Union[Grid2, Grid3], power: int = 1) -> np.ndarray:
    """Product of x(l - x) factors, scaled to 1 at the center and raised to power"""
    coords = grid.coordinates()
    lengths = (grid.lx, grid.ly) if isinstance(grid, Grid2) else (grid.lx, grid.ly, grid.lz)
    values = np.ones(grid.shape)
    for x, length in zip(coords, lengths):
        values = values * 4.0 * x * (length - x) / (length * length)
    return values ** power


def resolved_modes(n: int) -> int:
    """Highest sine mode index kept well resolved by central differences on n nodes"""
    return max(1, (n - 1) // 4)


def sine_field(grid: Grid2, rng: np.random.Generator, max_mode: Optional[int] = None) -> np.ndarray:
    """Random combination of sin(k pi x) sin(l pi y) modes, unit sup-norm"""
    X, Y = grid.coordinates()
    kmax = max_mode or min(resolved_modes(grid.nx), resolved_modes(grid.ny), 4)
    values = np.zeros(grid.shape)
    for k in range(1, kmax + 1):
        for l in range(1, kmax + 1):
            values += rng.standard_normal() / (k * l) * np.sin(k * np.pi * X / grid.lx) * np.sin(l * np.pi * Y / grid.ly)
    return _unit(values)


def cosine_field(grid: Grid2, rng: np.random.Generator, max_mode: int = 3) -> np.ndarray:
    """Random smooth field with no boundary conditions, unit sup-norm"""
    X, Y = grid.coordinates()
    values = np.zeros(grid.shape)
    for k in range(max_mode):
        for l in range(max_mode):
            values += rng.standard_normal() / (1 + k + l) * np.cos(k * np.pi * X / grid.lx) * np.cos(l * np.pi * Y / grid.ly)
    return _unit(values)


def _unit(values: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(values)))
    return values / peak if peak > 0.0 else values


def admissible_plate_vector(grid: Grid2, fixed: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Smooth flat [u1, u2, w] with bubble factors, projected onto the constrained rows"""
    u_bubble = bubble(grid)
    w_bubble = bubble(grid, power=2)
    x = np.concatenate([
        (u_bubble * sine_field(grid, rng)).ravel(),
        (u_bubble * sine_field(grid, rng)).ravel(),
        (w_bubble * sine_field(grid, rng)).ravel(),
    ])
    x[fixed] = 0.0
    return x


def plate_sampler(grid: Grid2, fixed: np.ndarray, amplitude: float = 0.1,
                  in_plane_ratio: float = 0.1) -> Callable[[np.random.Generator], np.ndarray]:
    """Random plate states for the gradient check; nonzero on GammaT nodes so traction terms count"""
    n = grid.n_nodes

    def sample(rng: np.random.Generator) -> np.ndarray:
        x = amplitude * np.concatenate([cosine_field(grid, rng).ravel() for _ in range(3)])
        x[:2 * n] *= in_plane_ratio
        x[fixed] = 0.0
        return x

    return sample


def airy_potential(grid: Grid2, rng: np.random.Generator) -> np.ndarray:
    """Smooth potential vanishing to second order on the boundary"""
    return _unit(bubble(grid, power=2) * cosine_field(grid, rng))


def multiplier_sample(grid: Grid2, fixed: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Resolved-mode scalar field with constrained nodes zeroed"""
    z = sine_field(grid, rng)
    z = z.ravel().copy()
    z[fixed] = 0.0
    return z


def box_sampler(grid: Grid3, fixed: np.ndarray, amplitude: float = 0.05) -> Callable[[np.random.Generator], np.ndarray]:
    """Random smooth displacement fields on a box, flat [u1, u2, u3], constrained rows zeroed"""
    X, Y, Z = grid.coordinates()
    lengths = (grid.lx, grid.ly, grid.lz)

    def sample(rng: np.random.Generator) -> np.ndarray:
        components = []
        for _ in range(3):
            values = np.zeros(grid.shape)
            for k in range(2):
                for l in range(2):
                    for m in range(2):
                        values += rng.standard_normal() / (1 + k + l + m) * (
                            np.cos(k * np.pi * X / lengths[0])
                            * np.cos(l * np.pi * Y / lengths[1])
                            * np.cos(m * np.pi * Z / lengths[2])
                        )
            components.append(amplitude * _unit(values).ravel())
        x = np.concatenate(components)
        x[fixed] = 0.0
        return x

    return sample
