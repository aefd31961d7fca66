import json
from pathlib import Path

import numpy as np
import pytest

from main import build_parser, main
from models.scenario import GridSpec
from services import report_service
from services.scenario_runner import (
    EXIT_CONFIG,
    EXIT_OK,
    ScenarioRunner,
    load_scenario,
    run_scenario,
)
from utils.errors import ConfigError
from utils.serialization import write_solution

SCENARIOS = Path(__file__).resolve().parents[1] / "config" / "scenarios"
MIXED_EDGES = {"west": "Gamma0", "east": "GammaT", "south": "GammaT", "north": "GammaT"}


def small_plate(**overrides) -> dict:
    """13 x 13 clamped plate under a light load with trimmed sample counts"""
    config = {
        "model": "plate_clamped",
        "name": "small_plate",
        "grid": {"nx": 13, "ny": 13},
        "seed": 17,
        "solver": {"grad_tol": 1e-10},
        "material": {"lambda_h": 1.0, "mu_h": 1.0, "thickness_h": 1.0},
        "loads": {"P": {"kind": "constant", "value": 0.01}},
        "k_policy": {"mode": "auto"},
        "checks": {
            "gradcheck_samples": 5, "coercivity_samples": 20, "j2_samples": 8,
            "weak_duality_trials": 20, "concavity_directions": 10, "sup_inf_samples": 10,
            "fenchel_young_samples": 4,
        },
    }
    config.update(overrides)
    return config


def small_box(**overrides) -> dict:
    config = {
        "model": "elasticity3d_clamped",
        "name": "small_box",
        "grid": {"nx": 7, "ny": 7, "nz": 7},
        "seed": 3,
        "solver": {"grad_tol": 1e-10},
        "elastic_tensor": {"kind": "isotropic", "lambda": 1.0, "mu": 1.0},
        "loads3d": {"P": [{"kind": "constant", "value": 0.0}, {"kind": "constant", "value": 0.0},
                          {"kind": "constant", "value": -0.01}]},
        "checks": {"gradcheck_samples": 4, "coercivity_samples": 10, "tensor_samples": 500},
    }
    config.update(overrides)
    return config


def write_config(tmp_path: Path, config: dict, name: str = "scenario.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


def check_names(report) -> set:
    return {check.name for check in report.checks}


class TestLoadScenario:
    """Scenario parsing and validation"""

    def test_shipped_scenarios_parse(self):
        """Every bundled scenario validates"""
        paths = sorted(SCENARIOS.glob("*.json"))
        assert len(paths) >= 5
        for path in paths:
            load_scenario(path)

    def test_missing_k_policy(self, tmp_path):
        """A plate scenario without k_policy names that field"""
        config = small_plate()
        del config["k_policy"]
        with pytest.raises(ConfigError) as info:
            load_scenario(write_config(tmp_path, config))
        assert info.value.field == "k_policy"

    def test_invalid_value_names_field(self, tmp_path):
        """Pydantic failures become ConfigError with the dotted location"""
        config = small_plate(eps3=1.5)
        with pytest.raises(ConfigError) as info:
            load_scenario(write_config(tmp_path, config))
        assert info.value.field == "eps3"

    def test_mixed_needs_both_labels(self, tmp_path):
        """plate_mixed with every edge Gamma0 is rejected"""
        config = small_plate(model="plate_mixed")
        with pytest.raises(ConfigError) as info:
            load_scenario(write_config(tmp_path, config))
        assert info.value.field == "grid.partition"

    def test_mixed_plate_needs_no_k_policy(self, tmp_path):
        """k_policy is only required where duality runs"""
        config = small_plate(model="plate_mixed", grid={"nx": 13, "ny": 13, "partition": MIXED_EDGES})
        del config["k_policy"]
        assert load_scenario(write_config(tmp_path, config)).k_policy is None

    def test_malformed_json(self, tmp_path):
        """Unparseable files are configuration errors"""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_scenario(path)


class TestExitCodes:
    """Failures map to exit codes instead of exceptions"""

    def test_config_error_exit(self, tmp_path):
        """Missing k_policy exits with 2 and still writes a report"""
        config = small_plate()
        del config["k_policy"]
        report = run_scenario(write_config(tmp_path, config), out_dir=tmp_path / "out")
        assert report.exit_code == EXIT_CONFIG
        assert "k_policy" in report.error
        assert (tmp_path / "out" / "report.json").exists()

    def test_small_grid_exit(self, tmp_path):
        """A grid below the stencil width exits with 2"""
        report = run_scenario(write_config(tmp_path, small_plate(grid={"nx": 3, "ny": 9})))
        assert report.exit_code == EXIT_CONFIG

    def test_3d_grid_cap(self, tmp_path):
        """3D grids above the node cap exit with 2"""
        report = run_scenario(write_config(tmp_path, small_box(grid={"nx": 19, "ny": 7, "nz": 7})))
        assert report.exit_code == EXIT_CONFIG
        assert report.error.startswith("grid:")

    def test_duality_needs_plate(self, tmp_path):
        """verify-duality on a 3D scenario is a configuration error"""
        report = run_scenario(write_config(tmp_path, small_box()), command="verify-duality")
        assert report.exit_code == EXIT_CONFIG

    def test_duality_rejects_mixed_plate(self, tmp_path):
        """verify-duality on plate_mixed exits 2 instead of skipping every duality check"""
        config = small_plate(model="plate_mixed", grid={"nx": 13, "ny": 13, "partition": MIXED_EDGES})
        zeros = np.zeros(13 * 13)
        solution = write_solution(tmp_path / "solution.json", "plate_mixed",
                                  GridSpec(nx=13, ny=13, partition=MIXED_EDGES), {"u1": zeros, "u2": zeros, "w": zeros})
        report = run_scenario(write_config(tmp_path, config), command="verify-duality", solution_path=solution)
        assert report.exit_code == EXIT_CONFIG
        assert "plate_clamped" in report.error

    def test_duality_needs_solution(self, tmp_path):
        """verify-duality without a stored solution is a configuration error"""
        report = run_scenario(write_config(tmp_path, small_plate()), command="verify-duality")
        assert report.exit_code == EXIT_CONFIG


class TestPlateRuns:
    """End-to-end plate pipelines"""

    def test_zero_load_plate(self):
        """No load: the zero state is the minimizer, J = J* = 0 and every check passes"""
        config = load_scenario(SCENARIOS / "zero_load_plate.json")
        report = ScenarioRunner(config, "zero_load_plate").run()
        assert report.exit_code == EXIT_OK, [c.name for c in report.checks if not c.passed]
        assert report.energy.total == 0.0
        assert report.solve.iters == 0
        assert report.dual.j_star == 0.0
        assert report.dual.gap == 0.0

    def test_small_plate_passes(self, tmp_path):
        """A loaded clamped plate passes certificate, gradient, solve and duality checks"""
        report = run_scenario(write_config(tmp_path, small_plate()), out_dir=tmp_path / "out", formats=["text"])
        assert report.exit_code == EXIT_OK, [c.name for c in report.checks if not c.passed]
        assert {"certificate_divergence", "coercivity_bound", "gradcheck", "converged", "duality_gap",
                "weak_duality", "concavity", "sup_inf"} <= check_names(report)
        assert report.energy.total < 0.0
        out = tmp_path / "out"
        for name in ("report.json", "summary.txt", "iterations.csv", "solution.json"):
            assert (out / name).exists()

    def test_gradcheck_command(self, tmp_path):
        """gradcheck runs only the gradient check"""
        report = run_scenario(SCENARIOS / "mixed_plate.json", command="gradcheck")
        assert report.exit_code == EXIT_OK
        assert check_names(report) == {"gradcheck"}
        assert report.energy is None

    def test_duality_round_trip(self, tmp_path):
        """verify-duality on a stored solution reproduces the solved energy without iterating"""
        path = write_config(tmp_path, small_plate())
        solved = run_scenario(path, out_dir=tmp_path / "solve")
        verified = run_scenario(path, command="verify-duality", solution_path=tmp_path / "solve" / "solution.json")
        assert verified.exit_code == EXIT_OK, [c.name for c in verified.checks if not c.passed]
        assert verified.solve.iters == 0
        assert verified.energy.total == pytest.approx(solved.energy.total, rel=1e-12)
        assert verified.dual.K == solved.dual.K

    def test_snapshot_model_mismatch(self, tmp_path):
        """A 3D snapshot cannot seed a plate run"""
        run_scenario(write_config(tmp_path, small_box(), "box.json"), out_dir=tmp_path / "box")
        report = run_scenario(write_config(tmp_path, small_plate()), command="verify-duality",
                              solution_path=tmp_path / "box" / "solution.json")
        assert report.exit_code == EXIT_CONFIG

    def test_repeat_runs_match(self, tmp_path):
        """Two runs of one seeded scenario write reports that compare equal"""
        path = write_config(tmp_path, small_plate())
        run_scenario(path, out_dir=tmp_path / "a", normalize=True)
        run_scenario(path, out_dir=tmp_path / "b", normalize=True)
        assert report_service.compare_reports(tmp_path / "a" / "report.json", tmp_path / "b" / "report.json") == {}
        assert (tmp_path / "a" / "report.json").read_text() == (tmp_path / "b" / "report.json").read_text()


class TestElasticityRuns:
    """End-to-end 3D pipelines"""

    def test_small_box_passes(self, tmp_path):
        """Clamped box: tensor hypotheses, transcript identity and solve all pass"""
        report = run_scenario(write_config(tmp_path, small_box()))
        assert report.exit_code == EXIT_OK, [c.name for c in report.checks if not c.passed]
        assert report.tensor_constants["c0"] == pytest.approx(2.0)
        assert {"tensor_hypotheses", "transcript_identity", "transcript_floor", "converged"} <= check_names(report)
        assert report.transcript.boundary_pairing == 0.0

    def test_mixed_box_starts_from_u_hat(self, tmp_path):
        """Mixed box with Dirichlet data on the bottom converges"""
        config = small_box(
            model="elasticity3d_mixed",
            grid={"nx": 7, "ny": 7, "nz": 7, "partition": {
                "west": "GammaT", "east": "GammaT", "south": "GammaT",
                "north": "GammaT", "bottom": "Gamma0", "top": "GammaT"}},
        )
        config["loads3d"]["u_hat"] = [{"kind": "constant", "value": 0.0}, {"kind": "constant", "value": 0.0},
                                      {"kind": "constant", "value": 0.005}]
        report = run_scenario(write_config(tmp_path, config))
        assert report.exit_code == EXIT_OK, [c.name for c in report.checks if not c.passed]


class TestCommandLine:
    """plate-dual entry point"""

    def test_parser_requires_from(self):
        """verify-duality without --from is a usage error"""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["verify-duality", "scenario.json"])

    def test_solve_and_compare(self, tmp_path, capsys):
        """solve exits 0; compare-reports matches identical runs and flags a changed one"""
        path = write_config(tmp_path, small_plate())
        assert main(["solve", str(path), "--out", str(tmp_path / "a"), "--format", "csv"]) == 0
        assert (tmp_path / "a" / "checks.csv").exists()
        assert main(["solve", str(path), "--out", str(tmp_path / "b")]) == 0
        assert main(["compare-reports", str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json")]) == 0
        assert "Reports match" in capsys.readouterr().out

        changed = json.loads((tmp_path / "b" / "report.json").read_text())
        changed["seed"] = 18
        (tmp_path / "b" / "report.json").write_text(json.dumps(changed))
        assert main(["compare-reports", str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json")]) == 1

    def test_missing_report(self, tmp_path):
        """compare-reports on a missing file exits with 2"""
        assert main(["compare-reports", str(tmp_path / "x.json"), str(tmp_path / "y.json")]) == EXIT_CONFIG


@pytest.mark.slow
class TestReferenceScenarios:
    """Shipped scenarios at full size"""

    @pytest.mark.parametrize("name", ["reference_plate", "mixed_plate", "elasticity_clamped", "elasticity_mixed"])
    def test_passes(self, tmp_path, name):
        """Every check passes"""
        report = run_scenario(SCENARIOS / f"{name}.json", out_dir=tmp_path)
        assert report.exit_code == EXIT_OK, [c.name for c in report.checks if not c.passed]
