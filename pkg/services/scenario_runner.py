import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Literal, Optional, Union

import numpy as np
from pydantic import ValidationError

from config import settings
from models.elastic import ElasticLoadSet
from models.plate import PlateState
from models.scenario import CertificateSummary, ScenarioConfig, SolveSummary, VerificationReport
from services import report_service
from services.coercivity import build_T3d, build_T_field, coercivity_floor, coercivity_terms, default_tol_div
from services.constitutive import (
    build_bending_tensor,
    build_membrane_tensor,
    check_tensor_hypotheses,
    elastic_tensor_from_spec,
)
from services.elasticity_service import ElasticProblem
from services.field_builder import build_elastic_fields, build_load_set
from services.plate_duality import verify_duality
from services.plate_energy import PlateProblem
from services.solver_service import LinearizedPreconditioner, gradcheck, minimize
from utils import sampling
from utils.errors import (
    BStarViolation,
    CertificateError,
    ConfigError,
    KSelectionError,
    PlateDualError,
    SolverStallError,
    StencilError,
)
from utils.operator_cache import cache_size, clear_cache
from utils.serialization import read_solution, write_solution

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_STALL = 3

Command = Literal["solve", "gradcheck", "verify-duality"]
PathLike = Union[str, Path]


def load_scenario(path: PathLike) -> ScenarioConfig:
    """Parse and validate a scenario file; every failure becomes a ConfigError naming the field"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} not found", "config")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}", "config")
    try:
        config = ScenarioConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(first["msg"], field)
    config.require_fields()
    return config


class ScenarioRunner:
    """Runs one scenario's pipeline and fills a VerificationReport"""

    def __init__(self, config: ScenarioConfig, name: str):
        self.config = config
        self.report = VerificationReport(scenario=name, model=config.model, seed=config.seed)
        self.solution: Dict[str, np.ndarray] = {}

    @contextmanager
    def _timed(self, stage: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.report.timings[stage] = time.perf_counter() - start

    def run(self, command: Command = "solve", initial: Optional[np.ndarray] = None) -> VerificationReport:
        # Operators are keyed by grid; each scenario starts from an empty cache
        clear_cache()
        try:
            if command == "verify-duality" and self.config.model != "plate_clamped":
                raise ConfigError("duality checks apply to plate_clamped only", "model")
            if self.config.is_plate:
                self._run_plate(command, initial)
            else:
                self._run_elasticity(command, initial)
            self.report.exit_code = EXIT_OK if self.report.all_passed() else EXIT_CHECK_FAILED
        except (ConfigError, StencilError) as e:
            logger.error(f"Configuration error: {e}")
            self.report.error = str(e)
            self.report.exit_code = EXIT_CONFIG
        except SolverStallError as e:
            logger.error(f"Solver stalled: {e}")
            self.report.error = str(e)
            self.report.exit_code = EXIT_STALL
        except PlateDualError as e:
            logger.error(f"Run failed: {e}")
            self.report.error = str(e)
            self.report.exit_code = EXIT_CHECK_FAILED
        logger.debug(f"Operator cache holds {cache_size()} entries after the run")
        verdict = "PASS" if self.report.exit_code == EXIT_OK else f"FAIL (exit {self.report.exit_code})"
        logger.info(f"Scenario {self.report.scenario}: {verdict}")
        return self.report

    # Shared stages

    def _gradcheck(self, energy_fn, gradient_fn, sampler) -> None:
        checks = self.config.checks
        with self._timed("gradcheck"):
            result = gradcheck(
                energy_fn, gradient_fn, checks.gradcheck_samples, sampler,
                seed=self.config.seed, tolerance=settings.GRADCHECK_TOL,
                directions_per_state=checks.gradcheck_directions,
            )
        self.report.add_check("gradcheck", result.passed, result.max_rel_error, result.tolerance)

    def _minimize(self, problem, x0: np.ndarray) -> np.ndarray:
        opts = self.config.solver
        with self._timed("minimize"):
            preconditioner = None
            if opts.precondition:
                preconditioner = LinearizedPreconditioner(problem.linearized_hessian(), problem.fixed)
            result = minimize(problem.energy, problem.gradient, x0, opts,
                              scale=problem.residual_scale, preconditioner=preconditioner)
        self.report.solve = SolveSummary(
            iters=result.iters, converged=result.converged, value=result.value,
            grad_norm=result.grad_norm, grad_tol=result.grad_tol,
        )
        self.report.history = result.history
        self.report.add_check("converged", result.converged, result.grad_norm, result.grad_tol)
        values = [record.J for record in result.history]
        rise = max((b - a for a, b in zip(values, values[1:])), default=0.0)
        self.report.add_check("energy_monotone", rise <= 0.0, rise, 0.0)
        return result.state

    def _stored_state(self, problem, initial: np.ndarray) -> np.ndarray:
        """Summary for a state read from a snapshot instead of solved here"""
        x = np.asarray(initial, dtype=float)
        value = problem.energy(x)
        grad_tol = self.config.solver.grad_tol or 1e-9 * (1.0 + abs(value))
        grad_norm = problem.stationarity_norm(x)
        self.report.solve = SolveSummary(
            iters=0, converged=grad_norm <= grad_tol, value=value, grad_norm=grad_norm, grad_tol=grad_tol,
        )
        self.report.add_check("converged", grad_norm <= grad_tol, grad_norm, grad_tol)
        return x

    def _initial(self, problem, initial: Optional[np.ndarray], default: np.ndarray) -> np.ndarray:
        if self.config.solver.init == "given":
            if initial is None:
                raise ConfigError("init 'given' needs a stored solution", "solver.init")
            return problem.project(initial)
        return default

    # Plate

    def _run_plate(self, command: Command, initial: Optional[np.ndarray]) -> None:
        cfg = self.config
        grid = cfg.grid.to_grid2()
        H = build_membrane_tensor(cfg.material)
        h = build_bending_tensor(H, cfg.material)
        loads = build_load_set(cfg.loads, grid)
        problem = PlateProblem(grid, H, h, loads, cfg.mode)

        if command == "gradcheck":
            self._gradcheck(problem.energy, problem.gradient, sampling.plate_sampler(grid, problem.fixed))
            return

        if command == "solve":
            self._plate_certificate(problem)
            if cfg.checks.gradcheck:
                self._gradcheck(problem.energy, problem.gradient, sampling.plate_sampler(grid, problem.fixed))
            x = self._minimize(problem, self._initial(problem, initial, np.zeros(3 * problem.n)))
        else:
            if initial is None:
                raise ConfigError("verify-duality needs a stored solution", "from")
            x = self._stored_state(problem, initial)

        self.report.energy = problem.breakdown(x)
        u1, u2, w = problem.split(x)
        self.solution = {"u1": u1, "u2": u2, "w": w}

        if cfg.mode == "clamped" and cfg.checks.duality:
            self._plate_duality(problem, PlateState.from_vector(grid, x))

    def _plate_certificate(self, problem: PlateProblem) -> None:
        cfg = self.config
        with self._timed("certificate"):
            try:
                cert = build_T_field(problem.loads, cfg.delta_pd)
            except CertificateError as e:
                self.report.add_check("certificate", False, detail=str(e))
                return
            floor = coercivity_floor(cert, problem.H, problem.h, problem.loads, cfg.mode)
        self.report.certificate = CertificateSummary(
            C_shift=cert.C_shift, min_eigenvalue=cert.min_eigenvalue,
            divergence_residual=cert.divergence_residual, tol_div=cert.tol_div, floor=floor,
        )
        self.report.add_check("certificate_divergence", cert.divergence_residual <= cert.tol_div,
                              cert.divergence_residual, cert.tol_div)
        self.report.add_check("certificate_min_eigenvalue", cert.min_eigenvalue >= cfg.delta_pd * (1.0 - 1e-12),
                              cert.min_eigenvalue, cfg.delta_pd)
        if not cfg.checks.coercivity:
            return

        with self._timed("coercivity"):
            rng = np.random.default_rng(cfg.seed)
            sampler = sampling.plate_sampler(problem.grid, problem.fixed)
            bound_slack = floor_slack = np.inf
            for _ in range(cfg.checks.coercivity_samples):
                x = sampler(rng) * 10.0 ** rng.uniform(-2.0, 1.0)
                terms = coercivity_terms(PlateState.from_vector(problem.grid, x), cert, problem.H, problem.h,
                                         problem.loads, cfg.mode)
                J = problem.energy(x)
                bound_slack = min(bound_slack, (J - terms.value) / (1.0 + abs(J)))
                floor_slack = min(floor_slack, (terms.core() - floor) / (1.0 + abs(floor)))
        tolerance = settings.COERCIVITY_TOL
        self.report.add_check("coercivity_bound", bound_slack >= -tolerance, bound_slack, -tolerance)
        self.report.add_check("coercivity_floor", floor_slack >= -tolerance, floor_slack, -tolerance)

    def _plate_duality(self, problem: PlateProblem, u0: PlateState) -> None:
        cfg = self.config
        with self._timed("duality"):
            try:
                dual = verify_duality(u0, problem.H, problem.h, problem.loads, cfg.k_policy,
                                      cfg.duality_options(), cfg.seed)
            except (KSelectionError, BStarViolation) as e:
                self.report.add_check("k_selection", False, detail=str(e))
                return
        self.report.dual = dual
        add = self.report.add_check
        grad_tol = self.report.solve.grad_tol
        tol_eq = 10.0 * grad_tol * (1.0 + problem.loads.sup_norm())

        add("k_selection", True, dual.K, detail=f"{dual.K_attempts} attempt(s)")
        add("duality_gap", dual.gap <= settings.GAP_TOL, dual.gap, settings.GAP_TOL)
        l_tol = settings.L_IDENTITY_TOL * (1.0 + abs(dual.j_star))
        add("l_identity", abs(dual.j1_value - dual.j_star) <= l_tol, abs(dual.j1_value - dual.j_star), l_tol)
        add("membrane_equilibrium", dual.residual_membrane <= tol_eq, dual.residual_membrane, tol_eq)
        add("moment_equilibrium", dual.residual_moment <= tol_eq, dual.residual_moment, tol_eq)
        add("b_star_margin", dual.b_star_margin > 0.0, dual.b_star_margin, 0.0)
        add("weak_duality", dual.weak_duality_violations == 0, float(dual.weak_duality_violations),
            dual.weak_duality.tolerance if dual.weak_duality else None)
        worst_stationarity = max(dual.stationarity.values()) if dual.stationarity else 0.0
        add("stationarity", worst_stationarity <= 10.0 * grad_tol, worst_stationarity, 10.0 * grad_tol)
        add("z_relation", dual.z_relation == 0.0, dual.z_relation, 0.0)
        worst_fenchel = max(dual.fenchel_equalities.values()) if dual.fenchel_equalities else 0.0
        add("fenchel_equalities", worst_fenchel <= 1e-8, worst_fenchel, 1e-8)
        if dual.fenchel_young_min_slack is not None:
            add("fenchel_young", dual.fenchel_young_min_slack >= -1e-10, dual.fenchel_young_min_slack, -1e-10)
        add("j2_positive", dual.j2_min_sampled > 0.0, dual.j2_min_sampled, 0.0)
        if dual.concavity is not None:
            add("concavity", dual.concavity.violations == 0, dual.concavity.worst, dual.concavity.tolerance)
        if dual.sup_inf is not None:
            add("sup_inf", dual.sup_inf.violations == 0, dual.sup_inf.worst, dual.sup_inf.tolerance)

    # Elasticity

    def _run_elasticity(self, command: Command, initial: Optional[np.ndarray]) -> None:
        cfg = self.config
        grid = cfg.grid.to_grid3()
        if max(grid.shape) > settings.MAX_GRID3:
            raise ConfigError(f"3D grids are capped at {settings.MAX_GRID3} nodes per axis", "grid")
        H = elastic_tensor_from_spec(cfg.elastic_tensor)
        fields = build_elastic_fields(cfg.loads3d, grid)
        loads = ElasticLoadSet(
            grid=grid, P=np.stack(fields["P"]), Pt=np.stack(fields["Pt"]), u_hat=np.stack(fields["u_hat"]),
        )
        if command == "gradcheck":
            problem = ElasticProblem(grid, H, loads, cfg.mode)
            self._gradcheck(problem.energy, problem.gradient, sampling.box_sampler(grid, problem.fixed))
            return

        with self._timed("tensor_hypotheses"):
            try:
                c0, c1 = check_tensor_hypotheses(H, cfg.checks.tensor_samples, cfg.seed)
                H = H.model_copy(update={"c0": c0, "c1": c1})
                self.report.tensor_constants = {"c0": c0, "c1": c1}
                self.report.add_check("tensor_hypotheses", True, min(c0, c1), 0.0)
            except CertificateError as e:
                self.report.add_check("tensor_hypotheses", False, detail=str(e))

        problem = ElasticProblem(grid, H, loads, cfg.mode)
        sampler = sampling.box_sampler(grid, problem.fixed)
        diagonal = self._elastic_certificate(problem, fields["P"], sampler)
        if cfg.checks.gradcheck:
            self._gradcheck(problem.energy, problem.gradient, sampler)
        x = self._minimize(problem, self._initial(problem, initial, problem.initial_state()))
        self.report.energy = problem.breakdown(x)
        if diagonal is not None:
            self.report.transcript = problem.transcript(x, diagonal)
        u = problem.split(x)
        self.solution = {"u1": u[0], "u2": u[1], "u3": u[2]}

    def _elastic_certificate(self, problem: ElasticProblem, P, sampler):
        cfg = self.config
        with self._timed("certificate"):
            try:
                diagonal, C_shift, lowest, residual = build_T3d(P, problem.grid, cfg.delta_pd)
            except CertificateError as e:
                self.report.add_check("certificate", False, detail=str(e))
                return None
        tol_div = default_tol_div(P)
        self.report.add_check("certificate_divergence", residual <= tol_div, residual, tol_div)
        self.report.add_check("certificate_min_eigenvalue", lowest >= cfg.delta_pd * (1.0 - 1e-12),
                              lowest, cfg.delta_pd)
        if not cfg.checks.coercivity:
            self.report.certificate = CertificateSummary(
                C_shift=C_shift, min_eigenvalue=lowest, divergence_residual=residual, tol_div=tol_div,
            )
            return diagonal

        with self._timed("coercivity"):
            rng = np.random.default_rng(cfg.seed)
            identity_defect = 0.0
            floor_slack = np.inf
            floor = None
            for _ in range(cfg.checks.coercivity_samples):
                x = problem.project(sampler(rng) * 10.0 ** rng.uniform(-2.0, 0.5))
                transcript = problem.transcript(x, diagonal)
                floor = transcript.floor
                scale = 1.0 + abs(transcript.direct)
                identity_defect = max(identity_defect,
                                      abs(transcript.transcript_with_remainder - transcript.direct) / scale)
                floor_slack = min(floor_slack, (transcript.transcript - transcript.floor) / (1.0 + abs(floor)))
        self.report.certificate = CertificateSummary(
            C_shift=C_shift, min_eigenvalue=lowest, divergence_residual=residual, tol_div=tol_div, floor=floor,
        )
        self.report.add_check("transcript_identity", identity_defect <= 1e-9, identity_defect, 1e-9)
        tolerance = settings.COERCIVITY_TOL
        self.report.add_check("transcript_floor", floor_slack >= -tolerance, floor_slack, -tolerance)
        return diagonal


def write_outputs(report: VerificationReport, solution: Dict[str, np.ndarray], config: Optional[ScenarioConfig],
                  out_dir: PathLike, formats: Iterable[str] = ("json",), normalize: bool = False) -> None:
    out = Path(out_dir)
    final = report_service.normalize_timings(report) if normalize else report
    for fmt in dict.fromkeys(["json", *formats]):
        report_service.emit_report(final, fmt, out)
    if report.history:
        report_service.write_iteration_log(report.history, out / "iterations.csv")
    if solution and config is not None:
        write_solution(out / "solution.json", config.model, config.grid, solution)


def run_scenario(config_path: PathLike, command: Command = "solve", solution_path: Optional[PathLike] = None,
                 out_dir: Optional[PathLike] = None, formats: Iterable[str] = ("json",),
                 normalize: bool = False) -> VerificationReport:
    """Load, run and (with out_dir) write one scenario; report.exit_code carries the verdict"""
    name = Path(config_path).stem
    config = None
    solution: Dict[str, np.ndarray] = {}
    try:
        config = load_scenario(config_path)
        initial = None
        if solution_path is not None:
            snapshot, fields = read_solution(solution_path)
            if snapshot.model != config.model:
                raise ConfigError(f"snapshot is for {snapshot.model}, scenario is {config.model}", "from")
            names = ["u1", "u2", "w"] if config.is_plate else ["u1", "u2", "u3"]
            initial = np.concatenate([fields[key] for key in names])
        runner = ScenarioRunner(config, config.name or name)
        report = runner.run(command, initial)
        solution = runner.solution
    except (ConfigError, StencilError) as e:
        logger.error(f"Configuration error: {e}")
        report = VerificationReport(scenario=name, model=config.model if config else None,
                                    error=str(e), exit_code=EXIT_CONFIG)
    if out_dir is not None:
        write_outputs(report, solution, config, out_dir, formats, normalize)
    return report
