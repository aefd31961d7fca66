import numpy as np
import pytest

from config import settings
from models.dual import DualityOptions, DualPoint, KPolicy
from models.fields import ScalarField2, SymTensorField2, VectorField2
from models.grid import Grid2
from models.material import LameParams
from models.plate import LoadSet, PlateState
from models.solver import SolveOptions
from services.constitutive import build_bending_tensor, build_membrane_tensor, contract4, invert_sym4, nk_inverse_field
from services.grid_calculus import plate_operators
from services.plate_duality import (
    L_operator,
    airy_membrane,
    biharmonic_forward,
    c0_apply,
    c0_free_mask,
    concavity_probe,
    divergence_free_shear,
    duality_gap,
    equilibrium_residuals,
    extract_dual,
    f_star,
    fenchel_equalities,
    fenchel_young_probe,
    g1_star,
    g2_star,
    j1_star,
    j2_star,
    j3_star,
    j_star,
    moment_diagonal,
    moment_shear_pair,
    select_K,
    stationarity_residuals,
    sup_inf_probe,
    verify_duality,
    weak_duality_probe,
)
from services.plate_energy import PlateProblem
from services.solver_service import LinearizedPreconditioner, minimize
from utils import sampling
from utils.errors import BStarViolation, KSelectionError, ParameterError

UNIT = LameParams(lambda_h=1.0, mu_h=1.0, thickness_h=1.0)


@pytest.fixture(scope="module")
def tensors():
    H = build_membrane_tensor(UNIT)
    return H, build_bending_tensor(H, UNIT)


@pytest.fixture(scope="module")
def solved_plate(tensors):
    """Converged 13 x 13 clamped plate under P = 1e-2"""
    H, h = tensors
    grid = Grid2(nx=13, ny=13)
    loads = LoadSet.uniform(grid, P=1e-2)
    problem = PlateProblem(grid, H, h, loads)
    result = minimize(problem.energy, problem.gradient, np.zeros(3 * problem.n), SolveOptions(grad_tol=1e-10),
                      scale=problem.residual_scale,
                      preconditioner=LinearizedPreconditioner(problem.linearized_hessian(), problem.fixed))
    assert result.converged
    return problem, PlateState.from_vector(grid, result.state)


def random_state(grid: Grid2, problem: PlateProblem, seed: int) -> PlateState:
    x = sampling.plate_sampler(grid, problem.fixed)(np.random.default_rng(seed))
    return PlateState.from_vector(grid, x)


def sheared_state(grid: Grid2, s: float) -> PlateState:
    """u1 = s(y - x), u2 = s(x - y): gamma11 = gamma22 = -s, gamma12 = s"""
    X, Y = grid.coordinates()
    return PlateState(grid=grid, u1=s * (Y - X), u2=s * (X - Y), w=np.zeros(grid.shape))


class TestExtraction:
    """Dual point of a primal state"""

    def test_zero_state(self, tensors):
        """u0 = 0 extracts the zero dual point with J* = 0"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        v = extract_dual(PlateState.zeros(grid), H, h, K=2.0)
        N, Q, M_tilde, z = v.flat()
        assert not np.any(N) and not np.any(Q) and not np.any(M_tilde) and not np.any(z)
        assert j_star(v, invert_sym4(H), invert_sym4(h)) == 0.0

    def test_multiplier_relation(self, tensors):
        """z* = -K w0 exactly"""
        H, h = tensors
        grid = Grid2(nx=11, ny=11)
        problem = PlateProblem(grid, H, h, LoadSet.zeros(grid))
        u = random_state(grid, problem, seed=1)
        v = extract_dual(u, H, h, K=10.0)
        assert np.all(v.z_star.values + 10.0 * u.w == 0.0)

    def test_b_star_violation(self, tensors):
        """Compression beyond K is rejected at extraction"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        with pytest.raises(BStarViolation):
            extract_dual(sheared_state(grid, 0.6), H, h, K=1.0)

    def test_nonpositive_K(self, tensors):
        """K <= 0 is a ParameterError"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        with pytest.raises(ParameterError):
            extract_dual(PlateState.zeros(grid), H, h, K=0.0)

    def test_fenchel_equalities_at_any_state(self, tensors):
        """The three Legendre equalities hold pointwise at any extracted pair"""
        H, h = tensors
        grid = Grid2(nx=13, ny=11)
        problem = PlateProblem(grid, H, h, LoadSet.zeros(grid))
        u = random_state(grid, problem, seed=2)
        defects = fenchel_equalities(extract_dual(u, H, h, K=10.0), u, H, h)
        assert set(defects) == {"G1", "G2", "F"}
        assert max(defects.values()) <= 1e-10

    def test_L_vanishes_at_extracted_point(self, tensors):
        """M_tilde + z* delta = h:grad grad w0 makes L a commutator of difference operators"""
        H, h = tensors
        grid = Grid2(nx=17, ny=17)
        problem = PlateProblem(grid, H, h, LoadSet.zeros(grid))
        u = random_state(grid, problem, seed=3)
        v = extract_dual(u, H, h, K=10.0)
        h_inv = invert_sym4(h)
        ops = plate_operators(grid)
        scale = 1.0 + float(np.max(np.abs(ops.D22 @ (ops.D11 @ u.w.ravel()))))
        assert float(np.max(np.abs(L_operator(v, h_inv).values))) <= 1e-10 * scale
        J_star = j_star(v, invert_sym4(H), h_inv)
        assert abs(j1_star(v, invert_sym4(H), h_inv, 0.5) - J_star) <= 1e-10 * (1.0 + abs(J_star))


class TestEquilibratedPerturbations:
    """Adjoint-form potentials have zero discrete divergence"""

    def test_airy_membrane(self):
        """div_h of an Airy field vanishes at every interior free node"""
        grid = Grid2(nx=15, ny=13)
        rng = np.random.default_rng(4)
        N = airy_membrane(grid, sampling.airy_potential(grid, rng))
        zero = np.zeros((3, grid.n_nodes))
        v = DualPoint.from_flat(grid, N, np.zeros((2, grid.n_nodes)), zero, np.zeros(grid.n_nodes), K=1.0)
        membrane, moment = equilibrium_residuals(v, LoadSet.zeros(grid))
        assert np.max(np.abs(N)) > 0.0
        assert membrane <= 1e-10 * (1.0 + float(np.max(np.abs(N))))
        assert moment == 0.0

    def test_moment_and_shear(self):
        """Matched pair, diagonal moments and divergence-free shear leave the moment balance at zero"""
        grid = Grid2(nx=15, ny=15)
        rng = np.random.default_rng(5)
        dM, dQ = moment_shear_pair(grid, sampling.airy_potential(grid, rng))
        dM = dM + moment_diagonal(grid, sampling.airy_potential(grid, rng))
        dQ = dQ + divergence_free_shear(grid, sampling.airy_potential(grid, rng))
        v = DualPoint.from_flat(grid, np.zeros((3, grid.n_nodes)), dQ, dM, np.zeros(grid.n_nodes), K=1.0)
        membrane, moment = equilibrium_residuals(v, LoadSet.zeros(grid))
        scale = 1.0 + max(float(np.max(np.abs(dM))), float(np.max(np.abs(dQ))))
        assert membrane == 0.0
        assert moment <= 1e-10 * scale / grid.hx


class TestC0:
    """Inverse fourth-order operator"""

    def test_round_trip(self, tensors):
        """C0 applied to the forward operator returns (1 - eps3) w on the C0 nodes"""
        _, h = tensors
        h_inv = invert_sym4(h)
        grid = Grid2(nx=17, ny=15)
        free = c0_free_mask(grid)
        values = np.random.default_rng(6).standard_normal(grid.n_nodes)
        values[~free] = 0.0
        w = ScalarField2(grid=grid, values=values.reshape(grid.shape))
        back = c0_apply(biharmonic_forward(w, h_inv), h_inv, 0.25)
        assert np.allclose(back.values, 0.75 * w.values, rtol=0.0, atol=1e-8)

    def test_zero_input(self, tensors):
        """C0 0 = 0 without a solve"""
        _, h = tensors
        grid = Grid2(nx=9, ny=9)
        out = c0_apply(ScalarField2(grid=grid, values=np.zeros(grid.shape)), invert_sym4(h), 0.5)
        assert not np.any(out.values)

    @pytest.mark.parametrize("eps3", [0.0, 1.0, -0.5])
    def test_eps3_range(self, tensors, eps3):
        """eps3 outside (0, 1) is a ParameterError"""
        _, h = tensors
        grid = Grid2(nx=9, ny=9)
        with pytest.raises(ParameterError):
            c0_apply(ScalarField2(grid=grid, values=np.ones(grid.shape)), invert_sym4(h), eps3)


class TestKSelection:
    """K policies and the J2* hypothesis"""

    def test_fixed_K(self, tensors):
        """A moderate fixed K on the zero state is accepted with positive J2*"""
        H, h = tensors
        grid = Grid2(nx=13, ny=13)
        dual, attempts, j2_min = select_K(PlateState.zeros(grid), H, h, KPolicy(mode="fixed", value=1.0),
                                          DualityOptions(j2_samples=4))
        assert dual.K == 1.0
        assert attempts == 1
        assert j2_min > 0.0

    def test_auto_K_doubles_on_violation(self, tensors):
        """1 + ||N||_inf leaves N + K delta indefinite under combined compression and shear; one doubling fixes it"""
        H, h = tensors
        grid = Grid2(nx=13, ny=13)
        u = sheared_state(grid, 0.6)
        dual, attempts, _ = select_K(u, H, h, KPolicy(mode="auto"), DualityOptions(j2_samples=2))
        assert attempts == 2
        assert dual.K == pytest.approx(2.0 * (1.0 + 0.6 * (H.entry(1, 1, 1, 1) + H.entry(1, 1, 2, 2))))

    def test_fixed_K_violation_not_retried(self, tensors):
        """A fixed K that violates B* fails on the first attempt"""
        H, h = tensors
        grid = Grid2(nx=9, ny=9)
        with pytest.raises(BStarViolation):
            select_K(sheared_state(grid, 0.6), H, h, KPolicy(mode="fixed", value=1.0))

    def test_large_K_fails_j2(self, tensors):
        """J2* decreases with K; a very large K makes it negative"""
        H, h = tensors
        grid = Grid2(nx=13, ny=13)
        with pytest.raises(KSelectionError):
            select_K(PlateState.zeros(grid), H, h, KPolicy(mode="fixed", value=1e6), DualityOptions(j2_samples=2))

    def test_j2_failure_not_retried(self, tensors):
        """Auto stops at the first B*-valid K when J2* is already negative there"""
        H, h = tensors
        grid = Grid2(nx=13, ny=13)
        s = 1e5
        with pytest.raises(KSelectionError) as info:
            select_K(sheared_state(grid, s), H, h, KPolicy(mode="auto"), DualityOptions(j2_samples=2))
        expected_K = 2.0 * (1.0 + s * (H.entry(1, 1, 1, 1) + H.entry(1, 1, 2, 2)))
        assert info.value.details["K"] == pytest.approx(expected_K)
        assert info.value.details["j2_min"] <= 0.0

    def test_fixed_policy_needs_value(self):
        """mode=fixed without a value does not validate"""
        with pytest.raises(ValueError):
            KPolicy(mode="fixed")

    def test_j2_positive_and_quadratic(self, tensors):
        """J2* of the lowest sine mode is positive at K = 1 and scales by 4 when z* doubles"""
        _, h = tensors
        h_inv = invert_sym4(h)
        grid = Grid2(nx=13, ny=13)
        X, Y = grid.coordinates()
        z = np.sin(np.pi * X) * np.sin(np.pi * Y)
        single = j2_star(ScalarField2(grid=grid, values=z), 1.0, h_inv, 0.5)
        double = j2_star(ScalarField2(grid=grid, values=2.0 * z), 1.0, h_inv, 0.5)
        assert single > 0.0
        assert double == pytest.approx(4.0 * single, rel=1e-10)

    def test_options_follow_settings(self):
        """Sample counts and eps3 default to the configured values"""
        options = DualityOptions()
        assert options.j2_samples == settings.J2_SAMPLES
        assert options.eps3 == settings.EPS3
        assert options.weak_duality_trials == settings.WEAK_DUALITY_TRIALS
        assert options.concavity_directions == settings.CONCAVITY_DIRECTIONS
        assert options.sup_inf_samples == settings.SUP_INF_SAMPLES
        assert options.fenchel_young_samples == settings.FENCHEL_YOUNG_SAMPLES
        assert options.max_K_doublings == settings.MAX_K_DOUBLINGS


class TestFenchelYoung:
    """Conjugate pairs never beat the pairing"""

    @pytest.mark.parametrize("K", [0.5, 5.0])
    def test_slack_nonnegative(self, tensors, K):
        """G(E) + G*(S) - <E, S> >= 0 over random pairs"""
        H, h = tensors
        assert fenchel_young_probe(Grid2(nx=9, ny=9), H, h, K, samples=10, seed=7) >= -1e-10


class TestVerifyDuality:
    """Full check at a converged clamped plate"""

    def test_gap_closes(self, tensors, solved_plate):
        """J(u0) = J*(v0) at a critical point"""
        H, h = tensors
        problem, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        assert duality_gap(u0, v0, H, h, problem.loads) <= settings.GAP_TOL

    def test_report(self, tensors, solved_plate):
        """Every duality check passes on the converged plate"""
        H, h = tensors
        problem, u0 = solved_plate
        options = DualityOptions(j2_samples=8, weak_duality_trials=40, concavity_directions=10,
                                 sup_inf_samples=10, fenchel_young_samples=4)
        report = verify_duality(u0, H, h, problem.loads, KPolicy(mode="auto"), options, seed=3)
        assert report.K_attempts == 1
        assert report.b_star_margin > 0.0
        assert report.gap <= settings.GAP_TOL
        assert report.z_relation == 0.0
        assert report.j2_min_sampled > 0.0
        assert abs(report.j1_value - report.j_star) <= settings.L_IDENTITY_TOL * (1.0 + abs(report.j_star))
        assert max(report.fenchel_equalities.values()) <= 1e-8
        assert report.fenchel_young_min_slack >= -1e-10
        assert report.weak_duality_violations == 0
        assert report.concavity.violations == 0
        assert report.sup_inf.violations == 0
        assert report.residual_membrane <= 1e-8
        assert report.residual_moment <= 1e-8


class TestConjugates:
    """Closed-form values of the conjugate functionals on constant fields"""

    def test_pointwise_tensor_ops(self, tensors):
        """H:delta = (H1111 + H1122) delta and (0 + K delta)^-1 = delta / K"""
        H, _ = tensors
        grid = Grid2(nx=5, ny=5)
        ones, zeros = np.ones(grid.shape), np.zeros(grid.shape)
        S = contract4(H, SymTensorField2(grid=grid, t11=ones, t22=ones, t12=zeros))
        assert np.allclose(S.t11, 20.0 / 3.0) and np.allclose(S.t22, 20.0 / 3.0) and np.allclose(S.t12, 0.0)
        inverse = nk_inverse_field(SymTensorField2.zeros(grid), 2.0)
        assert np.allclose(inverse.t11, 0.5) and np.allclose(inverse.t22, 0.5) and np.allclose(inverse.t12, 0.0)

    def test_g1_of_unit_shift(self, tensors):
        """M_tilde = 0, z* = 1: 1/2 <hbar delta, delta> = 0.45"""
        _, h = tensors
        grid = Grid2(nx=9, ny=9)
        value = g1_star(SymTensorField2.zeros(grid), ScalarField2(grid=grid, values=np.ones(grid.shape)),
                        invert_sym4(h))
        assert value == pytest.approx(0.45, rel=1e-12)

    def test_g2_of_constant_shear(self, tensors):
        """N = 0, Q = e1, K = 2: 1/2 <Q, Q> / K = 0.25"""
        H, _ = tensors
        grid = Grid2(nx=9, ny=9)
        Q = VectorField2(grid=grid, c1=np.ones(grid.shape), c2=np.zeros(grid.shape))
        assert g2_star(SymTensorField2.zeros(grid), Q, 2.0, invert_sym4(H)) == pytest.approx(0.25, rel=1e-12)

    def test_f_of_linear_field(self):
        """z* = x, K = 2: ||grad z*||^2 / 2K = 0.25, one-sided ends included"""
        grid = Grid2(nx=9, ny=9)
        X, _ = grid.coordinates()
        assert f_star(ScalarField2(grid=grid, values=X), 2.0) == pytest.approx(0.25, rel=1e-12)

    def test_f_rejects_nonpositive_K(self):
        """K <= 0 is a parameter error"""
        grid = Grid2(nx=5, ny=5)
        with pytest.raises(ParameterError):
            f_star(ScalarField2(grid=grid, values=np.zeros(grid.shape)), 0.0)

    def test_j3_at_zero_displacement(self, tensors, solved_plate):
        """The multiplier terms vanish at u = 0, leaving J*"""
        H, h = tensors
        problem, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        H_inv, h_inv = invert_sym4(H), invert_sym4(h)
        zero = PlateState.zeros(u0.grid)
        assert j3_star(v0, zero, problem.loads, H_inv, h_inv) == j_star(v0, H_inv, h_inv)

    def test_stationarity_at_extracted_point(self, tensors, solved_plate):
        """Every variation of J3* vanishes at (v0, u0)"""
        H, h = tensors
        problem, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        residuals = stationarity_residuals(v0, u0, problem.loads, invert_sym4(H), invert_sym4(h))
        assert set(residuals) == {"M_tilde", "Q", "N", "z_star", "u"}
        for name in ("M_tilde", "Q", "N", "z_star"):
            assert residuals[name] <= 1e-9, name
        assert residuals["u"] <= 1e-8

    def test_j3_equals_j_star_on_equilibrated_point(self, tensors):
        """With every equilibrium residual at zero the multiplier terms vanish for a nonzero u"""
        H, h = tensors
        H_inv, h_inv = invert_sym4(H), invert_sym4(h)
        grid = Grid2(nx=15, ny=15)
        rng = np.random.default_rng(12)
        N = 0.25 * unit_sup(airy_membrane(grid, sampling.airy_potential(grid, rng)))
        dM, dQ = moment_shear_pair(grid, sampling.airy_potential(grid, rng))
        M_tilde = unit_sup(dM) + unit_sup(moment_diagonal(grid, sampling.airy_potential(grid, rng)))
        Q = dQ / float(np.max(np.abs(dM))) + unit_sup(divergence_free_shear(grid, sampling.airy_potential(grid, rng)))
        v = DualPoint.from_flat(grid, N, Q, M_tilde, np.zeros(grid.n_nodes), K=1.0)
        loads = LoadSet.zeros(grid)
        problem = PlateProblem(grid, H, h, loads)
        u = PlateState.from_vector(grid, sampling.admissible_plate_vector(grid, problem.fixed, rng))
        assert np.max(np.abs(u.w)) > 0.0
        J_star = j_star(v, H_inv, h_inv)
        assert j3_star(v, u, loads, H_inv, h_inv) == pytest.approx(J_star, rel=1e-9, abs=1e-9)

    def test_j3_at_zero_dual_point(self, tensors):
        """Zero dual point under a transverse load: J3* = <w, -P>"""
        H, h = tensors
        grid = Grid2(nx=11, ny=11)
        loads = LoadSet.uniform(grid, P=1.0)
        w = sampling.bubble(grid, power=2)
        u = PlateState(grid=grid, u1=np.zeros(grid.shape), u2=np.zeros(grid.shape), w=w)
        expected = -float(plate_operators(grid).weights @ w.ravel())
        value = j3_star(DualPoint.zeros(grid, K=2.0), u, loads, invert_sym4(H), invert_sym4(h))
        assert expected < 0.0
        assert value == pytest.approx(expected, rel=1e-12)


def unit_sup(stack: np.ndarray) -> np.ndarray:
    return stack / float(np.max(np.abs(stack)))


class TestProbes:
    """Weak duality, concavity and sup-inf checks on their own"""

    def test_weak_duality_equality_at_u0(self, tensors, solved_plate):
        """At u = u0 the bound holds with equality up to the gap tolerance"""
        H, h = tensors
        problem, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        J0 = problem.energy(u0.pack())
        assert abs(j_star(v0, invert_sym4(H), invert_sym4(h)) - J0) <= settings.GAP_TOL * (1.0 + abs(J0))
        result = weak_duality_probe(v0, u0, H, h, problem.loads, trial_count=1, seed=2)
        assert result.evaluated == 1
        assert result.violations == 0
        assert result.worst <= result.tolerance

    def test_weak_duality_large_bubble(self, tensors, solved_plate):
        """u0 plus a growing bubble in w: the right side pulls away faster than the amplitude"""
        H, h = tensors
        problem, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        J_star = j_star(v0, invert_sym4(H), invert_sym4(h))
        ops = plate_operators(u0.grid)
        b = sampling.bubble(u0.grid, power=2).ravel()
        excess = []
        for a in (10.0, 100.0):
            x = u0.pack()
            x[2 * problem.n:] += a * b
            x = problem.project(x)
            _, _, w = problem.split(x)
            y1, y2 = ops.grad(w - u0.w.ravel())
            rhs = problem.energy(x) + 0.5 * v0.K * float(ops.weights @ (y1 * y1 + y2 * y2))
            excess.append(rhs - J_star)
        assert excess[0] > 0.0
        assert excess[1] > 10.0 * excess[0]
        result = weak_duality_probe(v0, u0, H, h, problem.loads, trial_count=20, seed=5)
        assert result.violations == 0

    def test_concavity_in_moments(self, tensors):
        """An M_tilde-only direction at the zero point has a negative second difference"""
        H, h = tensors
        H_inv, h_inv = invert_sym4(H), invert_sym4(h)
        grid = Grid2(nx=13, ny=13)
        rng = np.random.default_rng(8)
        dM = np.stack([sampling.cosine_field(grid, rng).ravel() for _ in range(3)])
        direction = (np.zeros((3, grid.n_nodes)), np.zeros((2, grid.n_nodes)), dM)
        result = concavity_probe(DualPoint.zeros(grid, K=1.0), [direction], 0.5, H_inv, h_inv)
        assert result.evaluated == 1 and result.skipped == 0
        assert result.worst < 0.0
        assert result.violations == 0

    def test_concavity_in_shear(self, tensors, solved_plate):
        """A Q-only direction at the extracted point has a negative second difference"""
        H, h = tensors
        _, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        grid = u0.grid
        rng = np.random.default_rng(9)
        dQ = np.stack([sampling.cosine_field(grid, rng).ravel() for _ in range(2)])
        direction = (np.zeros((3, grid.n_nodes)), dQ, np.zeros((3, grid.n_nodes)))
        result = concavity_probe(v0, [direction], 0.5, invert_sym4(H), invert_sym4(h))
        assert result.evaluated == 1
        assert result.worst < 0.0
        assert result.violations == 0

    def test_sup_inf(self, tensors, solved_plate):
        """Self-equilibrated perturbations of the extracted point never raise J1* above J*"""
        H, h = tensors
        _, u0 = solved_plate
        v0 = extract_dual(u0, H, h, K=1.0)
        result = sup_inf_probe(v0, 12, 0.5, invert_sym4(H), invert_sym4(h), seed=11)
        assert result.evaluated + result.skipped == 12
        assert result.evaluated > 0
        assert result.violations == 0
        assert result.worst <= result.tolerance
