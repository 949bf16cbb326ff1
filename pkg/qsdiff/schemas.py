"""Document models of every JSON artifact.

The JSON Schema of an artifact is the ``model_json_schema()`` of its
document model; ``qsd schema <name>`` prints it.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from qsdiff.config import InfFloat, ModelSpec

TailVerdictName = Literal['finite', 'infinite', 'inconclusive']
OutcomeName = Literal['converges', 'escapes', 'undetermined']
TheoremName = Literal[
    'HighKilling',
    'RecurrentLowKilling',
    'TransientLowKilling',
    'EntranceBoundary',
    'ZeroKappaCorollary',
    'None',
]


class _Document(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class TailDocument(_Document):
    verdict: TailVerdictName
    value: InfFloat | None = None
    growth_exponent_estimate: InfFloat | None = None
    cutoffs_used: list[float] = Field(default_factory=list)
    confidence: Literal['declared', 'numerical'] = 'numerical'


class BoundaryDocument(_Document):
    at_zero: Literal['regular', 'not_regular']
    at_infinity: Literal['regular', 'exit', 'entrance', 'natural']
    accessible_at_infinity: bool
    recurrent_unkilled: bool
    scale_tail: TailDocument
    speed_tail: TailDocument
    accessibility_integral: TailDocument
    entrance_integral: TailDocument


class EvidenceDocument(_Document):
    lambda0: float | None
    kappa_liminf: InfFloat
    kappa_limsup: InfFloat
    kappa_limit_exists: bool
    boundary: BoundaryDocument | None
    theorem_applied: TheoremName


class DensityDocument(_Document):
    """A density sampled on a grid."""

    x: list[float]
    density: list[float]


class VerdictDocument(_Document):
    """Output of ``qsd classify``."""

    outcome: OutcomeName
    mortality_rate: float | None = None
    escape_rate: float | None = None
    reason: str | None = None
    notes: list[str] = Field(default_factory=list)
    qsd: DensityDocument | None = None
    evidence: EvidenceDocument


class EigenDocument(_Document):
    """Output of ``qsd eigen``; the eigenfunction samples go to a CSV file."""

    index: int = Field(ge=0)
    lambda_: float = Field(alias='lambda')
    bracket: tuple[float, float] | None = None
    x_max_used: float | None = None
    x_reliable: float | None = None
    l1_mass: TailDocument | None = None
    l2_mass: TailDocument | None = None
    schedule: list[tuple[float, float]] = Field(default_factory=list)
    phi_csv: str | None = None

    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)


class SurvivorStatsDocument(_Document):
    """Output of ``qsd simulate``."""

    paths: int
    dt: float
    t_final: float
    seed: int
    record_times: list[float]
    survivors: list[int]
    survival_prob: list[float]
    absorbed: list[int]
    bin_edges: list[float]
    histogram: list[list[int]]
    overflow: list[int]
    step_too_coarse: bool
    first_step_crossing: float


class CheckDocument(_Document):
    """One comparison between the verdict and the simulation."""

    name: str
    passed: bool
    estimate: float | None = None
    standard_error: float | None = None
    expected: float | None = None
    tolerance: float | None = None
    detail: str | None = None


class VerifyDocument(_Document):
    """Output of ``qsd verify``."""

    verdict: VerdictDocument
    checks: list[CheckDocument]
    agreement: bool
    tv_distance: list[float | None] | None = None


SCHEMAS: dict[str, type[BaseModel]] = {
    'model': ModelSpec,
    'verdict': VerdictDocument,
    'eigen': EigenDocument,
    'survivor-stats': SurvivorStatsDocument,
    'verify': VerifyDocument,
}
