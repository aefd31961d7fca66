import numpy as np
import pytest

from dev.independent_quadrature import plate_bubble_state, plate_energy_oracle
from models.grid import Grid2
from models.material import LameParams
from models.plate import LoadSet, PlateState
from services.constitutive import build_bending_tensor, build_membrane_tensor
from services.plate_energy import PlateProblem, energy, gamma, gradient, kappa, kl_displacement, moments
from services.solver_service import gradcheck
from utils import sampling
from utils.errors import ConfigError, ParameterError

UNIT = LameParams(lambda_h=1.0, mu_h=1.0, thickness_h=1.0)
MIXED = {"west": "Gamma0", "east": "GammaT", "south": "GammaT", "north": "GammaT"}


@pytest.fixture
def tensors():
    H = build_membrane_tensor(UNIT)
    return H, build_bending_tensor(H, UNIT)


def state_from(grid: Grid2, u1=None, u2=None, w=None) -> PlateState:
    X, Y = grid.coordinates()
    zero = np.zeros(grid.shape)
    return PlateState(
        grid=grid,
        u1=zero if u1 is None else u1(X, Y),
        u2=zero if u2 is None else u2(X, Y),
        w=zero if w is None else w(X, Y),
    )


class TestStrains:
    """Membrane strain, curvature and moments"""

    def test_gamma_of_parabolic_deflection(self):
        """u = 0, w = x^2 gives gamma11 = 2x^2 and nothing else"""
        grid = Grid2(nx=17, ny=17)
        X, _ = grid.coordinates()
        g = gamma(state_from(grid, w=lambda x, y: x ** 2))
        assert np.max(np.abs(g.t11 - 2.0 * X ** 2)) <= 1e-12
        assert np.max(np.abs(g.t22)) <= 1e-12
        assert np.max(np.abs(g.t12)) <= 1e-12

    def test_gamma_of_in_plane_stretch(self):
        """u1 = x, u2 = y/2 gives gamma11 = 1, gamma22 = 1/2"""
        grid = Grid2(nx=9, ny=9)
        g = gamma(state_from(grid, u1=lambda x, y: x, u2=lambda x, y: 0.5 * y))
        assert np.allclose(g.t11, 1.0) and np.allclose(g.t22, 0.5) and np.allclose(g.t12, 0.0)

    def test_kappa_of_sine_deflection(self):
        """w = sin(pi x) sin(pi y): kappa11 = pi^2 w within O(h^2)"""
        grid = Grid2(nx=33, ny=33)
        s = state_from(grid, w=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        k = kappa(s)
        assert np.max(np.abs(k.t11 - np.pi ** 2 * s.w)[1:-1, 1:-1]) <= 1e-2

    def test_moments(self, tensors):
        """w = x^2 / 2: M = h:(-1, 0, 0)"""
        _, h = tensors
        grid = Grid2(nx=9, ny=9)
        M = moments(state_from(grid, w=lambda x, y: 0.5 * x ** 2), h)
        assert np.allclose(M.t11, -h.entry(1, 1, 1, 1))
        assert np.allclose(M.t22, -h.entry(2, 2, 1, 1))
        assert np.allclose(M.t12, 0.0, atol=1e-12)


class TestKirchhoffLove:
    """3D displacement reconstruction"""

    def test_tilted_plate(self):
        """u = 0, w = x at x3 = h/2: u1_hat = -h/2 everywhere, u3_hat = x"""
        grid = Grid2(nx=9, ny=9)
        X, _ = grid.coordinates()
        hat1, hat2, hat3 = kl_displacement(state_from(grid, w=lambda x, y: x), 0.25, 0.5)
        assert np.allclose(hat1.values, -0.25)
        assert np.allclose(hat2.values, 0.0)
        assert np.allclose(hat3.values, X)

    def test_stretched_parabola(self):
        """u1 = x, w = x^2, x3 = 0.1: u1_hat = x - 0.2x"""
        grid = Grid2(nx=9, ny=9)
        X, _ = grid.coordinates()
        hat1, _, _ = kl_displacement(state_from(grid, u1=lambda x, y: x, w=lambda x, y: x ** 2), 0.1, 1.0)
        assert np.allclose(hat1.values, 0.8 * X, atol=1e-12)

    def test_height_outside_thickness(self):
        """|x3| > h/2 is a ParameterError"""
        grid = Grid2(nx=9, ny=9)
        with pytest.raises(ParameterError):
            kl_displacement(PlateState.zeros(grid), 0.6, 1.0)


class TestEnergy:
    """Discrete energy values"""

    def test_zero_state(self, tensors):
        """u = 0 gives every term 0"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        result = energy(PlateState.zeros(grid), H, h, LoadSet.uniform(grid, P=1.0))
        assert result.total == 0.0 and result.membrane == 0.0 and result.bending == 0.0

    def test_unloaded_energy_nonnegative(self, tensors):
        """Without loads J is the stored energy, never negative"""
        H, h = tensors
        grid = Grid2(nx=13, ny=13)
        problem = PlateProblem(grid, H, h, LoadSet.zeros(grid))
        sampler = sampling.plate_sampler(grid, problem.fixed, amplitude=1.0)
        rng = np.random.default_rng(0)
        for _ in range(10):
            result = problem.breakdown(sampler(rng))
            assert result.total == pytest.approx(result.membrane + result.bending)
            assert result.total >= 0.0

    def test_matches_gauss_legendre_oracle(self, tensors):
        """Bubble state energy terms converge to the continuum integrals at second order"""
        H, h = tensors
        amplitudes = (0.5, -0.3, 8.0)
        oracle = plate_energy_oracle(1.0, 1.0, amplitudes, H, h, P=(1.0, 0.2, -0.1))
        errors = {}
        for n in (33, 65):
            grid = Grid2(nx=n, ny=n)
            loads = LoadSet.uniform(grid, P=1.0, P1=0.2, P2=-0.1)
            result = energy(plate_bubble_state(grid, amplitudes), H, h, loads)
            errors[n] = {term: abs(getattr(result, term) - oracle[term]) / abs(oracle[term])
                         for term in ("membrane", "bending", "work")}
        for term in ("membrane", "bending", "work"):
            assert errors[65][term] <= 1e-2
            assert errors[65][term] <= errors[33][term]

    def test_mixed_spring(self, tensors):
        """u1 = 1 on a three-edge GammaT boundary stores eps1 * 3 in the springs"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9, partition=MIXED)
        loads = LoadSet.zeros(grid).model_copy(update={"eps1": 0.5, "eps2": 0.5})
        result = energy(state_from(grid, u1=lambda x, y: np.ones_like(x)), H, h, loads, "mixed")
        assert result.spring == pytest.approx(1.5)
        assert result.total == pytest.approx(1.5)

    def test_mode_mismatch(self, tensors):
        """Clamped mode refuses GammaT edges; mixed mode needs one"""
        H, h = tensors
        mixed_grid = Grid2(nx=9, ny=9, partition=MIXED)
        with pytest.raises(ConfigError):
            PlateProblem(mixed_grid, H, h, LoadSet.zeros(mixed_grid), "clamped")
        clamped_grid = Grid2(nx=9, ny=9)
        with pytest.raises(ConfigError):
            PlateProblem(clamped_grid, H, h, LoadSet.zeros(clamped_grid), "mixed")


class TestGradient:
    """Analytic gradient of the discrete energy"""

    def test_zero_state_unloaded(self, tensors):
        """u = 0 with no loads is stationary"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        g = gradient(PlateState.zeros(grid), H, h, LoadSet.zeros(grid))
        assert np.all(g.pack() == 0.0)

    def test_constrained_rows_zeroed(self, tensors):
        """Gamma0 rows and the first w layer carry no gradient"""
        H, h = tensors
        grid = Grid2(nx=11, ny=11)
        problem = PlateProblem(grid, H, h, LoadSet.uniform(grid, P=1.0, P1=0.5))
        g = problem.gradient(sampling.plate_sampler(grid, problem.fixed)(np.random.default_rng(1)))
        assert np.all(g[problem.fixed] == 0.0)

    @pytest.mark.parametrize("mode", ["clamped", "mixed"])
    def test_central_difference(self, tensors, mode):
        """Directional derivatives agree with central differences to 1e-6 relative"""
        H, h = tensors
        grid = Grid2(nx=13, ny=11, partition=MIXED) if mode == "mixed" else Grid2(nx=13, ny=11)
        zero = np.zeros(grid.shape)
        X, Y = grid.coordinates()
        loads = LoadSet(grid=grid, P=1.0 + X, P1=0.3 * Y, P2=-0.2 * X, Pt=0.1 + zero, Pt1=0.2 + zero,
                        Pt2=-0.1 + zero, eps1=0.5, eps2=0.25)
        problem = PlateProblem(grid, H, h, loads, mode)
        result = gradcheck(problem.energy, problem.gradient, 20, sampling.plate_sampler(grid, problem.fixed),
                           seed=4, tolerance=1e-6)
        assert result.passed, result.max_rel_error
