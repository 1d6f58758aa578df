from pydantic import BaseModel, Field, ConfigDict, field_serializer, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional, Tuple
import math

import numpy as np

# Constants
DEFAULT_N_LADDER = (4, 8, 16, 32, 64, 128, 256, 512, 1024)
DEFAULT_TAIL_WINDOW = 3
DEFAULT_TOLERANCE = 1e-2
DEFAULT_EXACT_TOLERANCE = 1e-8
DEFAULT_RATE_TOLERANCE = 5e-2
DEFAULT_MARGIN = 1e-4
PROXY_DISCLOSURE = "tail-window"


def to_jsonable(value: Any) -> Any:
    """Recursively replace infinities by the strings "inf" / "-inf" and numpy scalars by Python ones"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if hasattr(value, "to_float"):
        return to_jsonable(value.to_float())
    return value


def from_jsonable_float(value: Any) -> float:
    """Inverse of to_jsonable for a single number ("inf" strings included)"""
    return float(value)


class LabRecord(BaseModel):
    """Base for every serialized record; "inf" / "-inf" strings are read back as floats"""

    model_config = ConfigDict(populate_by_name=True)

    @field_validator('*', mode='before')
    @classmethod
    def parse_infinity_strings(cls, v):
        if isinstance(v, str) and v in ("inf", "-inf"):
            return float(v)
        return v


class CheckReport(LabRecord):
    """Outcome of a property check: {check, pass, worst_violation, witness}"""
    check: str
    passed: bool = Field(..., alias="pass")
    worst_violation: float = 0.0
    witness: Dict[str, Any] = Field(default_factory=dict)
    details: Dict[str, Any] = Field(default_factory=dict)
    proxy: Optional[str] = None

    @field_serializer('worst_violation', 'witness', 'details', when_used='json')
    def serialize_extended(self, value: Any) -> Any:
        return to_jsonable(value)


class EntropyRecord(LabRecord):
    """Asymptotic entropy of one function: tail-window lower/upper proxies"""
    label: str = ""
    lower: float
    upper: float
    converged: bool
    source: Literal["numeric", "analytic"] = "numeric"
    proxy: str = PROXY_DISCLOSURE
    sweep: List[Tuple[int, float]] = Field(default_factory=list)

    @field_validator('sweep', mode='before')
    @classmethod
    def parse_sweep(cls, v):
        return [(int(n), from_jsonable_float(value)) for n, value in v]

    @field_serializer('lower', 'upper', 'sweep', when_used='json')
    def serialize_extended(self, value: Any) -> Any:
        return to_jsonable(value)

    @model_validator(mode='after')
    def validate_order(self):
        if self.lower > self.upper:
            raise ValueError(f'lower entropy {self.lower} exceeds upper entropy {self.upper}')
        return self

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.upper)


class GrowthRecord(LabRecord):
    """Membership of f in the growth class: some tested t > 1 keeps the entropy of t f finite"""
    in_class: bool
    witness_t: float
    upper_entropy: float

    @field_serializer('upper_entropy', when_used='json')
    def serialize_extended(self, value: float) -> Any:
        return to_jsonable(value)


class SetRecord(LabRecord):
    descriptor: str
    lower_bound: float
    J_lower: float
    J_upper: float
    upper_bound: float
    passed: bool = Field(..., alias="pass")

    @field_serializer('lower_bound', 'J_lower', 'J_upper', 'upper_bound', when_used='json')
    def serialize_extended(self, value: float) -> Any:
        return to_jsonable(value)


class FunctionRecord(LabRecord):
    function_id: str
    entropy_lower: Optional[float] = None
    entropy_upper: Optional[float] = None
    sup_f_minus_rate: Optional[float] = None
    skipped: bool = False
    passed: bool = Field(..., alias="pass")

    @field_serializer('entropy_lower', 'entropy_upper', 'sup_f_minus_rate', when_used='json')
    def serialize_extended(self, value: Optional[float]) -> Any:
        return to_jsonable(value)


class LdpSummary(LabRecord):
    ldp_pass: bool
    lp_pass: bool
    tolerance: float
    certified: Optional[bool] = None
    proxy: str = PROXY_DISCLOSURE
    skipped_functions: int = 0


class LdpReport(LabRecord):
    """Per-set sandwich records, per-function Laplace-principle records and a summary"""
    summary: LdpSummary
    sets: List[SetRecord] = Field(default_factory=list)
    functions: List[FunctionRecord] = Field(default_factory=list)
    steps: Dict[str, Any] = Field(default_factory=dict)
    provenance: Dict[str, Any] = Field(default_factory=dict)

    @field_serializer('steps', 'provenance', when_used='json')
    def serialize_extended(self, value: Dict[str, Any]) -> Any:
        return to_jsonable(value)

    @model_validator(mode='after')
    def validate_summary(self):
        if self.sets and self.summary.ldp_pass and not all(r.passed for r in self.sets):
            raise ValueError('ldp_pass contradicts the per-set records')
        if self.summary.lp_pass and not all(r.passed for r in self.functions if not r.skipped):
            raise ValueError('lp_pass contradicts the per-function records')
        return self


class RunConfig(BaseModel):
    """Effective configuration of one command-line run"""
    model: str = Field(default="laplace", min_length=1, description="Catalog model id")
    grid: Optional[str] = Field(default=None, description="Grid spec 'lower,upper,points' (per axis, ';' separated)")
    family: Optional[str] = Field(default=None, description="Testing family spec")
    functions: List[str] = Field(default_factory=list, description="Function specs")
    n_ladder: Tuple[int, ...] = Field(default=DEFAULT_N_LADDER)
    tail_window: int = Field(default=DEFAULT_TAIL_WINDOW, ge=1)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, gt=0)
    exact_tolerance: float = Field(default=DEFAULT_EXACT_TOLERANCE, gt=0)
    rate_tolerance: float = Field(default=DEFAULT_RATE_TOLERANCE, gt=0)
    margin: float = Field(default=DEFAULT_MARGIN, gt=0)
    radius: Optional[float] = Field(default=None, description="Exposedness radius; None means two grid steps")
    entropy_source: Literal["auto", "analytic", "numeric"] = "auto"
    seed: int = 0
    tightness_levels: Tuple[float, ...] = (1.0, 2.0)
    ball_radii: Optional[Tuple[float, ...]] = None
    check_finite_dimension: bool = False
    out: str = Field(default="results")

    model_config = ConfigDict(frozen=True, extra='forbid')

    @field_validator('n_ladder')
    @classmethod
    def validate_ladder(cls, v):
        if not v:
            raise ValueError('n_ladder cannot be empty')
        for i, n in enumerate(v):
            if n < 1:
                raise ValueError(f'n_ladder entry {i+1} must be a positive integer')
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError('n_ladder must be strictly increasing')
        return tuple(v)

    @field_validator('tightness_levels')
    @classmethod
    def validate_levels(cls, v):
        if not v:
            raise ValueError('tightness_levels cannot be empty')
        if any(level <= 0 for level in v):
            raise ValueError('tightness_levels must be positive')
        return tuple(v)

    @field_validator('radius')
    @classmethod
    def validate_radius(cls, v):
        if v is not None and v <= 0:
            raise ValueError('radius must be positive')
        return v

    @field_validator('ball_radii')
    @classmethod
    def validate_ball_radii(cls, v):
        if v is not None and (not v or any(r < 0 for r in v)):
            raise ValueError('ball_radii must be a nonempty list of non-negative radii')
        return v

    @model_validator(mode='after')
    def validate_window(self):
        if self.tail_window > len(self.n_ladder):
            raise ValueError(f'tail_window {self.tail_window} exceeds the ladder length {len(self.n_ladder)}')
        return self

    def provenance(self) -> Dict[str, Any]:
        return to_jsonable(self.model_dump())
