"""
Pydantic models for bath and coupling parameters, run configuration and reports.
"""
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app import __version__
from app.config import settings


class Boundary(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class Geometry(str, Enum):
    """Placement of the links between the qubit and the bath."""
    STAR_A = "A"
    CONTIGUOUS_B = "B"
    EXPLICIT = "explicit"


class Method(str, Enum):
    DETERMINANT = "determinant"
    CENTRAL_SPIN = "central_spin"
    ED = "ed"
    TROTTER = "trotter"


class SectorRule(str, Enum):
    """How a degenerate (or quasi-degenerate) ground space is resolved."""
    MAX_SZ = "max_sz"
    EVEN_PARITY = "even_parity"
    LOWEST = "lowest"
    STAGGERED = "staggered"


class Level(str, Enum):
    STEP = "step"
    GATE = "gate"
    PULSE = "pulse"


class GateKind(str, Enum):
    UZ = "Uz"
    UXX = "Uxx"
    UYY = "Uyy"
    UZZ = "Uzz"
    GLOBAL_UZ = "GlobalUz"
    GLOBAL_UXX = "GlobalUxx"
    GLOBAL_UYY = "GlobalUyy"
    GLOBAL_UZZ = "GlobalUzz"
    PAULI_X = "PauliX"
    PAULI_Z = "PauliZ"
    VX = "Vx"
    VX_DAG = "VxDag"
    VY = "Vy"
    VY_DAG = "VyDag"
    LASER = "Laser"
    DISPLACEMENT = "Displacement"


class ChainSpec(BaseModel):
    """Bath Hamiltonian parameters."""
    model_config = ConfigDict(
        frozen=True,
        populate_by_name=True,
        allow_inf_nan=False,
        extra="forbid",
        json_schema_extra={
            "example": {"N": 8, "J": 1.0, "gamma": 1.0, "delta": 0.0, "lambda": 0.5, "boundary": "open"}
        },
    )

    N: int = Field(..., ge=2, description="Number of bath spins")
    J: float = Field(1.0, gt=0, description="Nearest-neighbor exchange, unit of energy")
    gamma: float = Field(1.0, ge=0, le=1, description="xy anisotropy")
    delta: float = Field(0.0, description="z anisotropy")
    lambda_: float = Field(0.0, alias="lambda", description="Transverse field")
    boundary: Boundary = Field(Boundary.OPEN, description="Open or periodic chain")

    @property
    def is_free_fermion(self) -> bool:
        return self.delta == 0.0

    def with_updates(self, **changes: Any) -> "ChainSpec":
        data = self.model_dump(by_alias=False)
        data.update(changes)
        return ChainSpec.model_validate(data)


class CouplingSpec(BaseModel):
    """Qubit-bath links. ``sites`` are 1-based and only given for explicit geometry."""
    model_config = ConfigDict(
        frozen=True,
        allow_inf_nan=False,
        extra="forbid",
        json_schema_extra={
            "example": {"epsilon": 0.25, "m": 1, "geometry": "A", "sites": None, "omega_e": 0.0}
        },
    )

    epsilon: float = Field(0.0, description="Qubit-bath coupling strength")
    m: int = Field(1, ge=1, description="Number of linked bath spins")
    geometry: Geometry = Field(Geometry.STAR_A, description="Link placement")
    sites: Optional[Tuple[int, ...]] = Field(None, description="Explicit 1-based linked sites")
    omega_e: float = Field(0.0, description="Qubit splitting, used by the gate compiler only")

    @model_validator(mode="after")
    def check_sites(self) -> "CouplingSpec":
        if self.geometry == Geometry.EXPLICIT:
            if self.sites is None:
                raise ValueError("explicit geometry requires sites")
            if len(self.sites) != self.m:
                raise ValueError(f"expected {self.m} sites, got {len(self.sites)}")
            if any(s < 1 for s in self.sites):
                raise ValueError("sites are 1-based")
            if any(b <= a for a, b in zip(self.sites, self.sites[1:])):
                raise ValueError("sites must be strictly increasing")
        return self

    def with_updates(self, **changes: Any) -> "CouplingSpec":
        data = self.model_dump()
        data.update(changes)
        return CouplingSpec.model_validate(data)


class TimeGrid(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    t_max: float = Field(..., ge=0, description="Final time in units of 1/J")
    steps: int = Field(settings.DEFAULT_TIME_POINTS, ge=1, description="Number of uniform points on [0, t_max]")


SweepParam = Literal["lambda", "gamma", "delta", "epsilon", "m", "N"]


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    param: SweepParam
    values: List[float] = Field(..., min_length=1)


class CompilerOptions(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    t: float = Field(1.0, ge=0)
    n_steps: int = Field(10, description="Stroboscopic steps; must be at least 1")
    level: Level = Level.STEP
    n_list: List[int] = Field(default_factory=lambda: [10, 20, 40, 80])


class AnalysisOptions(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    lambda_c: float = Field(1.0, description="Critical field for the log-divergence fit")
    exclude: Optional[float] = Field(None, ge=0,
                                     description="Half-width around lambda_c left out of the log-divergence fit")
    exponent_N: Optional[int] = Field(None, ge=1, description="Divide |cos|^(exponent_N/2) out of the revival maxima")
    frequency: Optional[float] = Field(None, gt=0, description="Envelope oscillation frequency, default 2 (epsilon + J lambda)")
    t_lo: Optional[float] = Field(None, description="Envelope/plateau window start override")


class RunConfig(BaseModel):
    """Top-level configuration consumed by the command line."""
    model_config = ConfigDict(
        frozen=True,
        allow_inf_nan=False,
        extra="forbid",
        json_schema_extra={
            "example": {
                "schema_version": "1",
                "model": {"N": 300, "gamma": 1.0, "lambda": 0.5, "boundary": "periodic"},
                "coupling": {"epsilon": 0.25, "m": 1, "geometry": "A"},
                "time": {"t_max": 50.0, "steps": 2001},
                "method": "determinant",
                "sweep": {"param": "lambda", "values": [0.5, 1.0, 1.5]},
                "output": "results/fig2",
            }
        },
    )

    schema_version: str = Field(settings.SCHEMA_VERSION)
    model: ChainSpec
    coupling: CouplingSpec = Field(default_factory=CouplingSpec)
    time: TimeGrid = Field(default_factory=lambda: TimeGrid(t_max=10.0))
    method: Method = Method.DETERMINANT
    sweep: Optional[SweepSpec] = None
    output: str = "results"
    threads: Optional[int] = Field(None, ge=1)
    sector_rule: Optional[SectorRule] = None
    trotter_dt: float = Field(0.01, gt=0)
    parity_exact: bool = False
    compiler: CompilerOptions = Field(default_factory=CompilerOptions)
    analysis: AnalysisOptions = Field(default_factory=AnalysisOptions)

    @field_validator("schema_version")
    @classmethod
    def known_schema(cls, v: str) -> str:
        if v != settings.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v!r}, expected {settings.SCHEMA_VERSION!r}")
        return v

    @model_validator(mode="after")
    def check_links(self) -> "RunConfig":
        if self.sweep is None or self.sweep.param not in ("m", "N"):
            if self.coupling.m > self.model.N:
                raise ValueError(f"coupling.m={self.coupling.m} exceeds model.N={self.model.N}")
        if self.sweep is not None and self.sweep.param in ("m", "N"):
            if any(v != int(v) or v < 1 for v in self.sweep.values):
                raise ValueError(f"sweep over {self.sweep.param} needs positive integer values")
        return self


# Fit reports ---------------------------------------------------------------

class AlphaEstimate(BaseModel):
    """Gaussian short-time rate, L(t) ~ exp(-alpha t^2)."""
    alpha: float = Field(..., ge=0)
    source: Literal["perturbative", "fit", "variance"]
    fit_window: Tuple[float, float] = (0.0, 0.0)
    residual: float = 0.0
    flagged: bool = False


class PlateauEstimate(BaseModel):
    value: float = Field(..., ge=0, le=1)
    window: Tuple[float, float] = (0.0, 0.0)
    std: float = 0.0
    source: Literal["perturbative", "fit", "spectral"] = "fit"


class EnvelopeFit(BaseModel):
    S2: float = Field(..., ge=0)
    epsilon_used: float
    quality: float
    points: int


class CriticalScalingFit(BaseModel):
    L0: float
    beta: float
    monotone: bool


class LogDivergenceFit(BaseModel):
    c1: float
    c2: float
    points: int


class ConvergenceReport(BaseModel):
    level: Level
    t: float
    n_list: List[int]
    distances: List[float]
    order: Optional[float]


class ConcurrenceProfile(BaseModel):
    pairs: List[Tuple[int, int]]
    values: List[float]
    chain: ChainSpec


class AlphaConcurrenceRow(BaseModel):
    param: float
    C1: float
    alpha: float


class Gate(BaseModel):
    """One entry of a stroboscopic schedule.

    ``sites`` are lattice positions with the qubit at 0 and bath spins at 1..N.
    ``angle`` is the rotation angle, pulse area (duration times Omega) for lasers,
    or the displacement phase. ``phase`` is the laser phase.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: GateKind
    sites: Tuple[int, ...] = ()
    angle: float = 0.0
    phase: float = 0.0
    step: int = 0


class RunManifest(BaseModel):
    schema_version: str = settings.SCHEMA_VERSION
    library_version: str = __version__
    command: str
    method: Optional[str] = None
    config: Dict[str, Any]
    points: List[Dict[str, Any]] = Field(default_factory=list)
    determinant_exponent: int
    wall_time: float = 0.0
    summary: Dict[str, Any] = Field(default_factory=dict)


# API request/response models ------------------------------------------------

class EchoRequest(BaseModel):
    model: ChainSpec
    coupling: CouplingSpec = Field(default_factory=CouplingSpec)
    time: TimeGrid
    method: Method = Method.DETERMINANT
    sector_rule: Optional[SectorRule] = None

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "model": {"N": 8, "lambda": 0.5},
                "coupling": {"epsilon": 0.25},
                "time": {"t_max": 5.0, "steps": 201},
                "method": "determinant",
            }
        }
    )


class EchoResponse(BaseModel):
    method: str
    times: List[float]
    values: List[float]
    determinant_exponent: int


class ConcurrenceRequest(BaseModel):
    model: ChainSpec
    sector_rule: Optional[SectorRule] = None


class CompileRequest(BaseModel):
    model: ChainSpec
    coupling: CouplingSpec = Field(default_factory=CouplingSpec)
    t: float = Field(1.0, ge=0)
    n_steps: int = Field(10, ge=1)
    level: Level = Level.STEP


class ScheduleResponse(BaseModel):
    schema_version: str = settings.SCHEMA_VERSION
    level: Level
    n_steps: int
    tau: float
    gates: List[Gate]


class RecipeInfo(BaseModel):
    name: str
    description: str
    runs: int
