from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from varlab.config import settings
from varlab.models import Experiment, GammaRoute, KMethod, Normalization, Reading


def _is_dyadic(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


class KEstimate(BaseModel):
    method: KMethod
    value: float = Field(gt=0)
    stderr: float = Field(ge=0)
    n_rep: int = Field(ge=1)
    truncation: Optional[float] = None
    normalization: Normalization = Normalization.CALIBRATED
    low_confidence: bool = False


class ConstantVerdict(BaseModel):
    """Which local-time reading of the constant matches the quadratic-form value."""
    r2_value: float
    r2_stderr: float
    scale: float
    reference: float
    gaps: dict[Reading, float]
    matches: list[Reading]
    tolerance: float
    jensen_ordering: bool


class SelfSimilarityRow(BaseModel):
    t: float
    ratio: float
    expected_ratio: float
    ks_distance: float
    ratio_ok: bool
    ks_ok: bool


class SelfSimilarityReport(BaseModel):
    n_rep: int
    rows: list[SelfSimilarityRow] = []

    @property
    def passed(self) -> bool:
        return all(row.ratio_ok and row.ks_ok for row in self.rows)


class LemmaA1Report(BaseModel):
    x: float
    y: float
    z: float
    quadrature: float
    monte_carlo: float
    mc_stderr: float
    exact_chain: float
    bound: float
    constant: float
    bound_holds: bool
    routes_agree: bool


class LemmaA2Check(BaseModel):
    alpha: float
    beta: float
    sigma1_sq: float
    sigma2_sq: float
    formula: float
    quadrature: float
    monte_carlo: float
    mc_stderr: float
    agrees: bool


class Lemma1Report(BaseModel):
    a: float
    b: float
    beta: float
    n_sequence: list[int]
    sums: list[float]
    strictly_decreasing: bool
    decreasing_to_zero: bool
    fitted_rate: Optional[float] = None
    theoretical_rate: float


class ExperimentConfig(BaseModel):
    """One experiment run. ``n_rep`` and ``n_sequence`` fall back to per-experiment defaults."""

    model_config = ConfigDict(extra="forbid")

    experiment: Experiment
    n_steps: PositiveInt = 4096
    n_rep: Optional[PositiveInt] = None
    n_sequence: Optional[list[PositiveInt]] = None
    T: PositiveFloat = 1.0
    eps_exponent: PositiveFloat = 0.75
    variation_eps_steps: PositiveFloat = 2.0
    local_time_exponent: PositiveFloat = 1.25
    clark_ocone_field_exponent: PositiveFloat = 1.0
    k_rep: PositiveInt = 500
    gamma_route: GammaRoute = GammaRoute.DIRECT
    x_max: PositiveFloat = 20.0
    x_max_width: PositiveFloat = 1.0 / 16
    r2_steps_per_unit: PositiveInt = 256
    z_nodes: PositiveInt = 300
    hermite_nodes: PositiveInt = 21
    noise_refinement: PositiveInt = 4
    t_values: list[PositiveFloat] = [0.25, 0.5]
    mc_samples: PositiveInt = 1_000_000
    normalization: Normalization = Normalization.CALIBRATED
    quick: bool = False
    seed: int = Field(default_factory=lambda: settings.SEED, ge=0, lt=2**64)
    threads: PositiveInt = Field(default_factory=lambda: settings.THREADS)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)

    @field_validator("n_sequence")
    @classmethod
    def check_dyadic(cls, value):
        if value is None:
            return value
        if not value or any(not _is_dyadic(n) for n in value):
            raise ValueError(f"n_sequence must hold powers of two, got {value}")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"n_sequence must be strictly increasing, got {value}")
        return value

    @model_validator(mode="after")
    def check_partitions_nest(self):
        if self.n_sequence and self.n_steps % self.n_sequence[-1] != 0:
            raise ValueError(
                f"largest partition {self.n_sequence[-1]} must divide n_steps {self.n_steps}"
            )
        return self


class ResultRow(BaseModel):
    experiment: str
    replicate: int
    n: int
    statistic: str
    value: float


class StatisticSummary(BaseModel):
    value: float
    stderr: Optional[float] = None
    target: Optional[float] = None
    passed: Optional[bool] = None


class ReplicateFailure(BaseModel):
    replicate: int
    error: str


class RunManifest(BaseModel):
    config: ExperimentConfig
    version: str
    wall_time_seconds: float
    summary: dict[str, StatisticSummary]
    assertions: dict[str, bool]
    failed_replicates: list[ReplicateFailure] = []
    verdict: Optional[ConstantVerdict] = None

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())


class CompareRow(BaseModel):
    statistic: str
    value_a: float
    value_b: float
    difference: float
    combined_stderr: Optional[float] = None
    # None when either run gives the statistic no standard error
    z: Optional[float] = None


class CompareReport(BaseModel):
    experiment: Experiment
    rows: list[CompareRow]

    @property
    def max_abs_z(self) -> float:
        return max((abs(row.z) for row in self.rows if row.z is not None), default=0.0)

    @property
    def unscaled(self) -> list[str]:
        return [row.statistic for row in self.rows if row.z is None]
