from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from config import settings
from models.dual import DualityOptions, DualReport, KPolicy
from models.elastic import ElasticTranscript
from models.grid import EDGES_2D, FACES_3D, Grid2, Grid3
from models.loads import ElasticLoadSpec, PlateLoadSpec
from models.material import ElasticTensorSpec, LameParams
from models.plate import EnergyBreakdown
from models.solver import IterationRecord, SolveOptions
from utils.errors import ConfigError

ModelKind = Literal["plate_clamped", "plate_mixed", "elasticity3d_clamped", "elasticity3d_mixed"]


class GridSpec(BaseModel):
    """Grid section of a scenario; nz marks a 3D grid"""

    nx: int
    ny: int
    nz: Optional[int] = None
    lx: float = 1.0
    ly: float = 1.0
    lz: float = 1.0
    partition: Optional[Dict[str, Literal["Gamma0", "GammaT"]]] = Field(
        None, description="Label per edge (2D) or face (3D); omitted means Gamma0 everywhere"
    )

    def to_grid2(self) -> Grid2:
        partition = self.partition or {edge: "Gamma0" for edge in EDGES_2D}
        return Grid2(nx=self.nx, ny=self.ny, lx=self.lx, ly=self.ly, partition=partition)

    def to_grid3(self) -> Grid3:
        if self.nz is None:
            raise ConfigError("3D models need nz", "grid.nz")
        partition = self.partition or {face: "Gamma0" for face in FACES_3D}
        return Grid3(nx=self.nx, ny=self.ny, nz=self.nz, lx=self.lx, ly=self.ly, lz=self.lz, partition=partition)


class CheckToggles(BaseModel):
    """Which checks run and how many samples each draws"""

    gradcheck: bool = True
    gradcheck_samples: int = Field(settings.GRADCHECK_SAMPLES, ge=1)
    gradcheck_directions: int = Field(settings.GRADCHECK_DIRECTIONS, ge=1)
    coercivity: bool = True
    coercivity_samples: int = Field(settings.COERCIVITY_SAMPLES, ge=1)
    duality: bool = True
    weak_duality_trials: int = Field(settings.WEAK_DUALITY_TRIALS, ge=0)
    concavity_directions: int = Field(settings.CONCAVITY_DIRECTIONS, ge=0)
    sup_inf_samples: int = Field(settings.SUP_INF_SAMPLES, ge=0)
    j2_samples: int = Field(settings.J2_SAMPLES, ge=1)
    fenchel_young_samples: int = Field(settings.FENCHEL_YOUNG_SAMPLES, ge=0)
    tensor_samples: int = Field(settings.TENSOR_SAMPLES, ge=1)


class ScenarioConfig(BaseModel):
    """One scenario file"""

    model: ModelKind
    name: Optional[str] = None
    grid: GridSpec
    seed: int = Field(..., description="Seed for every random sample drawn by the run")
    solver: SolveOptions
    material: Optional[LameParams] = None
    loads: Optional[PlateLoadSpec] = None
    k_policy: Optional[KPolicy] = None
    eps3: float = Field(settings.EPS3, gt=0.0, lt=1.0)
    delta_pd: float = Field(settings.DELTA_PD, gt=0.0)
    elastic_tensor: Optional[ElasticTensorSpec] = None
    loads3d: Optional[ElasticLoadSpec] = None
    checks: CheckToggles = Field(default_factory=CheckToggles)

    @property
    def is_plate(self) -> bool:
        return self.model.startswith("plate")

    @property
    def mode(self) -> str:
        return "clamped" if self.model.endswith("clamped") else "mixed"

    def require_fields(self) -> None:
        """Raise ConfigError naming the first field this model needs but lacks"""
        if self.model == "plate_clamped":
            needed = ["material", "loads", "k_policy"]
        elif self.is_plate:
            needed = ["material", "loads"]
        else:
            needed = ["elastic_tensor", "loads3d"]
        for name in needed:
            if getattr(self, name) is None:
                raise ConfigError(f"required for model {self.model}", name)
        if not self.is_plate and self.grid.nz is None:
            raise ConfigError(f"required for model {self.model}", "grid.nz")
        if self.mode == "mixed":
            labels = set((self.grid.partition or {}).values())
            if labels != {"Gamma0", "GammaT"}:
                raise ConfigError("mixed models need both Gamma0 and GammaT parts", "grid.partition")

    def duality_options(self) -> DualityOptions:
        return DualityOptions(
            eps3=self.eps3,
            j2_samples=self.checks.j2_samples,
            weak_duality_trials=self.checks.weak_duality_trials,
            concavity_directions=self.checks.concavity_directions,
            sup_inf_samples=self.checks.sup_inf_samples,
            fenchel_young_samples=self.checks.fenchel_young_samples,
            max_K_doublings=settings.MAX_K_DOUBLINGS,
        )


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: Optional[str] = None


class SolveSummary(BaseModel):
    iters: int
    converged: bool
    value: float
    grad_norm: float
    grad_tol: float


class CertificateSummary(BaseModel):
    C_shift: float
    min_eigenvalue: float
    divergence_residual: float
    tol_div: float
    floor: Optional[float] = None


class VerificationReport(BaseModel):
    """Everything one scenario run measured"""

    model_config = ConfigDict(protected_namespaces=())

    schema_version: str = settings.SCHEMA_VERSION
    scenario: str
    model: Optional[str] = None
    seed: Optional[int] = None
    energy: Optional[EnergyBreakdown] = None
    solve: Optional[SolveSummary] = None
    certificate: Optional[CertificateSummary] = None
    tensor_constants: Optional[Dict[str, float]] = None
    dual: Optional[DualReport] = None
    transcript: Optional[ElasticTranscript] = None
    checks: List[CheckResult] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None
    exit_code: int = 0
    history: List[IterationRecord] = Field(default_factory=list, exclude=True)

    def add_check(self, name: str, passed: bool, value: Optional[float] = None,
                  tolerance: Optional[float] = None, detail: Optional[str] = None) -> CheckResult:
        result = CheckResult(name=name, passed=bool(passed), value=value, tolerance=tolerance, detail=detail)
        self.checks.append(result)
        return result

    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks)


class SolutionSnapshot(BaseModel):
    """Stored solution: grid, model and flat nodal arrays per field"""

    schema_version: str = settings.SCHEMA_VERSION
    model: ModelKind
    grid: GridSpec
    fields: Dict[str, List[float]]
