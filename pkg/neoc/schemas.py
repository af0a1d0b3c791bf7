"""Pydantic models for run configuration and JSON artifacts."""
from pydantic import BaseModel, Field, field_validator


class RunConfig(BaseModel):
    command: str
    builtin: str | None = None
    problem: str | None = None
    basis: str | None = None
    quad_order: int | None = Field(None, ge=2)
    max_iter: int = Field(100, ge=1)
    tol: float = 1e-10
    u0: list[str] | None = None
    delta: list[float] | None = None
    delta_param: str | None = None
    deltas: list[list[float]] | None = None
    steps: list[int] = Field(default_factory=lambda: [1])
    recalc: bool = False
    polish: bool = False
    out: str = "out"
    dt: float = 1e-3
    horizon: float = 50.0
    grid_pts: int = Field(201, ge=2)
    seed: int = 0

    @field_validator("tol", "dt", "horizon")
    @classmethod
    def must_be_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("steps")
    @classmethod
    def steps_at_least_one(cls, v: list[int]) -> list[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("every homotopy step count must be >= 1")
        return v


class SolutionArtifact(BaseModel):
    config: RunConfig | None = None
    problem: dict
    basis: str
    quad_order: int
    weights: list[float]
    alpha: list[float]
    iterations: int
    converged: bool
    weight_changes: list[float]
    residual_norms: list[float]
    monotonicity_violations: list[dict] = []
    closed_loop_eigenvalues: list[list[float]] = []


class SensitivityArtifact(BaseModel):
    config: RunConfig | None = None
    alpha: list[float]
    delta_alpha: list[float]
    J_w_alpha: list[list[float]]
    cond: float


class PairMetrics(BaseModel):
    a: str
    b: str
    sup: float
    rms: float


class ComparisonArtifact(BaseModel):
    config: RunConfig | None = None
    pairs: list[PairMetrics]
    probes: list[list[float]]
    costs: dict[str, list[float | None]]


class HomotopyRow(BaseModel):
    steps: int
    sup: float | None = None
    rms: float | None = None
    failed_at: int | None = None


class HomotopyArtifact(BaseModel):
    config: RunConfig | None = None
    delta_alpha: list[float]
    polish: bool
    rows: list[HomotopyRow]


class GainsArtifact(BaseModel):
    config: RunConfig | None = None
    alpha: list[float]
    delta_alpha: list[float]
    K_nom: list[list[float]]
    K_neoc: list[list[float]]
    K_recal: list[list[float]] | None = None
    P: list[list[float]]
    dP_dalpha: list[list[list[float]]]
    controllability_rank: int
    observability_rank: int
    neoc_closed_loop_hurwitz: bool


class SweepRowModel(BaseModel):
    delta_alpha: list[float]
    sup: float
    rms: float


class SweepArtifact(BaseModel):
    config: RunConfig | None = None
    rows: list[SweepRowModel]
