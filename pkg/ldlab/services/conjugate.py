"""
Testing families, the conjugate rate sup_{f in H} {f(x) - psi(f)}, exposed points
and the richness condition.

Exposedness is decided on the grid only: results are labelled "grid-certified".
"""
from __future__ import annotations

import enum
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ldlab.error_handlers import FamilyError, GridError, PreconditionError
from ldlab.models import DEFAULT_MARGIN, DEFAULT_TOLERANCE, CheckReport, EntropyRecord
from ldlab.services.cvxint import RateField, RateProvenance
from ldlab.services.entropy import (
    GROWTH_FACTORS,
    EntropyModel,
    analytic_record,
    asymptotic_entropy,
    growth_membership,
)
from ldlab.services.extgrid import ON_GRID_TOLERANCE, GridFunction, GridSpace, axis_values
from ldlab.services.metrics import timed_operation

logger = logging.getLogger(__name__)

GRID_CERTIFIED = "grid-certified"
DEFAULT_BALL_STEPS = (2, 10, 50)
# Excess below this (relative) is a tie, and ties never expose
STRICT_EXCESS = 1e-9


class FamilyKind(str, enum.Enum):
    LINEAR = "linear"
    INVERTED_V = "inverted-v"
    CUSTOM = "custom"


def parameter_grid(lower: float, upper: float, step: float) -> np.ndarray:
    """Parameters lower, lower + step, ..., upper on the same rounding as grid axes"""
    if step <= 0:
        raise FamilyError(f"Parameter step must be positive (got {step})")
    if lower > upper:
        raise FamilyError(f"Parameter range is empty ({lower} > {upper})")
    count = int(round((upper - lower) / step)) + 1
    if count == 1:
        return np.array([float(lower)])
    return axis_values(lower, upper, count)


class TestingFamily:
    """Finite parametric family of continuous real-valued test functions"""

    __test__ = False

    def __init__(self, kind: FamilyKind, parameters: np.ndarray,
                 evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray], label: str = ""):
        parameters = np.atleast_2d(np.asarray(parameters, dtype=float))
        if parameters.size == 0:
            raise FamilyError("Testing family is empty")
        self.kind = kind
        self.parameters = parameters
        self._evaluator = evaluator
        self.label = label or kind.value
        self._matrices: Dict[Any, np.ndarray] = {}

    @classmethod
    def linear(cls, lower: float, upper: float, step: float, dim: int = 1) -> "TestingFamily":
        axis = parameter_grid(lower, upper, step)
        mesh = np.meshgrid(*([axis] * dim), indexing='ij')
        params = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(FamilyKind.LINEAR, params, lambda p, pts: pts @ p,
                   label=f"linear:{lower:g},{upper:g},{step:g}")

    @classmethod
    def inverted_v(cls, lower: float, upper: float, step: float) -> "TestingFamily":
        params = parameter_grid(lower, upper, step)[:, None]

        def evaluate(p, pts):
            return abs(p[0]) - 2.0 * np.abs(pts[:, 0] - p[0])

        return cls(FamilyKind.INVERTED_V, params, evaluate, label=f"invv:{lower:g},{upper:g},{step:g}")

    @classmethod
    def tabulated(cls, parameters: np.ndarray, space: GridSpace, values: np.ndarray,
                  label: str = "custom") -> "TestingFamily":
        values = np.asarray(values, dtype=float)
        if values.shape != (len(parameters), space.size):
            raise FamilyError(f"Family table must have shape ({len(parameters)}, {space.size})")
        index = {tuple(p): i for i, p in enumerate(np.atleast_2d(parameters))}

        def evaluate(p, pts):
            if pts.shape[0] != space.size:
                raise FamilyError("Tabulated family used on a different grid")
            return values[index[tuple(p)]]

        return cls(FamilyKind.CUSTOM, parameters, evaluate, label=label)

    @classmethod
    def from_callable(cls, parameters: np.ndarray, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      label: str = "custom") -> "TestingFamily":
        return cls(FamilyKind.CUSTOM, parameters, fn, label=label)

    @property
    def size(self) -> int:
        return len(self.parameters)

    def __len__(self) -> int:
        return self.size

    def matrix(self, space: GridSpace) -> np.ndarray:
        """(members, points) values"""
        key = (space.lower, space.upper, space.points_per_axis)
        if key not in self._matrices:
            rows = np.array([np.broadcast_to(self._evaluator(p, space.points), (space.size,))
                             for p in self.parameters], dtype=float)
            if not np.all(np.isfinite(rows)):
                raise FamilyError(f"Family '{self.label}' has non-finite members on the grid")
            rows.setflags(write=False)
            self._matrices[key] = rows
        return self._matrices[key]

    def member(self, space: GridSpace, index: int) -> GridFunction:
        return GridFunction.from_array(space, self.matrix(space)[index])

    def describe(self, index: int) -> str:
        values = ",".join(f"{v:g}" for v in self.parameters[index])
        return f"{self.kind.value}({values})"

    def lexicographic_order(self) -> np.ndarray:
        return np.lexsort(self.parameters.T[::-1])


def family_from_spec(spec: str, space: GridSpace) -> TestingFamily:
    """linear:ymin,ymax,step | invv:amin,amax,step | custom:<file>"""
    kind, _, body = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "custom":
        from ldlab.services.storage import read_family_table
        params, table_space, values = read_family_table(body.strip())
        space.require_same(table_space)
        return TestingFamily.tabulated(params, space, values, label=spec)
    try:
        lower, upper, step = (float(x) for x in body.split(","))
    except ValueError:
        raise FamilyError(f"Malformed family spec '{spec}'; expected {kind}:min,max,step")
    if kind == "linear":
        return TestingFamily.linear(lower, upper, step, dim=space.dim)
    if kind == "invv":
        if space.dim != 1:
            raise FamilyError("Inverted-v family is one-dimensional")
        return TestingFamily.inverted_v(lower, upper, step)
    raise FamilyError(f"Unknown family kind '{kind}'", {"known": ["linear", "invv", "custom"]})


def _analytic(model: EntropyModel, H: TestingFamily, index: int, space: GridSpace,
              parameter: Optional[np.ndarray] = None):
    parameter = H.parameters[index] if parameter is None else parameter
    member = H.member(space, index)
    return model.analytic_entropy(H.kind.value, tuple(float(p) for p in parameter), member)


def member_entropy(model: EntropyModel, H: TestingFamily, index: int, source: str = "auto",
                   tolerance: float = DEFAULT_TOLERANCE) -> EntropyRecord:
    label = H.describe(index)
    if source != "numeric":
        value = _analytic(model, H, index, model.space)
        if value is not None:
            return analytic_record(value, label)
        if source == "analytic":
            raise PreconditionError(f"No closed-form entropy of {label} under '{model.model_id}'")
    return asymptotic_entropy(model, H.member(model.space, index), tolerance, label=label)


@timed_operation("entropy", "family_entropies")
def family_entropies(model: EntropyModel, H: TestingFamily, source: str = "auto",
                     tolerance: float = DEFAULT_TOLERANCE) -> List[EntropyRecord]:
    records = [member_entropy(model, H, i, source, tolerance) for i in range(H.size)]
    logger.info(f"Entropies of {H.size} members of {H.label} ({sum(r.source == 'analytic' for r in records)} analytic)")
    return records


def member_in_growth_class(model: EntropyModel, H: TestingFamily, index: int, source: str = "auto",
                           tolerance: float = DEFAULT_TOLERANCE) -> bool:
    if source != "numeric" and H.kind == FamilyKind.LINEAR:
        for t in GROWTH_FACTORS:
            value = model.analytic_entropy(H.kind.value, tuple(float(p) * t for p in H.parameters[index]))
            if value is None:
                break
            if value.is_finite:
                return True
        else:
            return False
    if source != "numeric" and H.kind == FamilyKind.INVERTED_V:
        # t f_a <= t|a| on the whole line, so every entropy of t f_a is finite
        return True
    return growth_membership(model, H.member(model.space, index), tolerance=tolerance).in_class


@timed_operation("conjugate", "conjugate_rate")
def conjugate_rate(model: EntropyModel, H: TestingFamily, source: str = "auto",
                   tolerance: float = DEFAULT_TOLERANCE,
                   entropies: Optional[Sequence[EntropyRecord]] = None) -> RateField:
    """Pointwise sup over the family of f(x) - upper entropy of f"""
    if H.size == 0:
        raise FamilyError("Testing family is empty")
    space = model.space
    entropies = list(entropies) if entropies is not None else family_entropies(model, H, source, tolerance)
    upper = np.array([record.upper for record in entropies])
    usable = np.isfinite(upper)
    skipped = int((~usable).sum())
    if skipped:
        logger.warning(f"{skipped} members of {H.label} have infinite entropy and were skipped")
    if usable.any():
        raw = np.max(H.matrix(space)[usable] - upper[usable][:, None], axis=0)
    else:
        raw = np.full(space.size, -np.inf)
    clamped = raw < 0
    if clamped.any():
        logger.warning(f"Conjugate of {H.label} is negative at {int(clamped.sum())} points; clamped to 0")
    diagnostics = {
        "family": H.label,
        "members": H.size,
        "skipped_members": skipped,
        "clamped_points": int(clamped.sum()),
        "min_raw": float(raw.min()),
        "entropy_sources": sorted({record.source for record in entropies}),
    }
    logger.info(f"Conjugate rate over {H.label} computed on {space.size} points")
    return RateField.from_array(space, np.maximum(raw, 0.0), RateProvenance.CONJUGATE, diagnostics)


class ExposedSet(BaseModel):
    """Grid points admitting an exposing family member"""

    space: GridSpace
    mask: np.ndarray
    parameters: np.ndarray
    nice: np.ndarray
    label: str = GRID_CERTIFIED
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode='after')
    def validate_parameters(self):
        has_parameter = ~np.any(np.isnan(self.parameters), axis=1)
        if not np.array_equal(has_parameter, self.mask):
            raise ValueError('exposing parameters must be present exactly at exposed points')
        if np.any(self.nice & ~self.mask):
            raise ValueError('only exposed points can be nice')
        return self

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def exposed_points(self) -> np.ndarray:
        return self.space.points[self.mask]


@timed_operation("conjugate", "detect_exposed")
def detect_exposed(model: EntropyModel, H: TestingFamily, rate: RateField, margin: float = DEFAULT_MARGIN,
                   radius: Optional[float] = None, source: str = "auto", tolerance: float = DEFAULT_TOLERANCE,
                   entropies: Optional[Sequence[EntropyRecord]] = None) -> ExposedSet:
    """x is exposed by f when rate - f has a strict minimum at x, with gap >= margin beyond radius"""
    space = rate.space
    model.space.require_same(space)
    radius = 2.0 * space.min_step if radius is None else radius
    if margin <= 0:
        raise PreconditionError(f"margin must be positive (got {margin})")
    if radius < space.min_step * (1 - ON_GRID_TOLERANCE):
        raise PreconditionError(f"radius {radius} is below the grid step {space.min_step}")

    F = H.matrix(space)
    R = rate.values
    pts = space.points
    exposers: Dict[int, List[int]] = {}
    for j in H.lexicographic_order():
        gap = R - F[j]
        x = int(np.argmin(gap))
        if not math.isfinite(gap[x]):
            continue
        excess = gap - gap[x]
        excess[x] = np.inf
        scale = max(1.0, abs(float(gap[x])), abs(float(R[x])))
        if not np.all(excess > STRICT_EXCESS * scale):
            continue
        far = np.linalg.norm(pts - pts[x], axis=1) >= radius - ON_GRID_TOLERANCE * space.min_step
        if np.any(excess[far] < margin):
            continue
        exposers.setdefault(x, []).append(int(j))

    records = {i: r for i, r in enumerate(entropies)} if entropies is not None else {}
    niceness: Dict[int, bool] = {}

    def is_nice(j: int) -> bool:
        if j not in niceness:
            record = records.get(j) or member_entropy(model, H, j, source, tolerance)
            niceness[j] = record.converged and member_in_growth_class(model, H, j, source, tolerance)
        return niceness[j]

    mask = np.zeros(space.size, dtype=bool)
    nice = np.zeros(space.size, dtype=bool)
    parameters = np.full((space.size, H.parameters.shape[1]), np.nan)
    for x, members in exposers.items():
        chosen = next((j for j in members if is_nice(j)), None)
        mask[x] = True
        nice[x] = chosen is not None
        parameters[x] = H.parameters[chosen if chosen is not None else members[0]]
        logger.debug(f"Point {pts[x].tolist()} exposed by {H.describe(members[0])} (nice={nice[x]})")

    logger.info(f"Found {int(mask.sum())} exposed points ({int(nice.sum())} nice) for {H.label}")
    return ExposedSet(space=space, mask=mask, parameters=parameters, nice=nice,
                      diagnostics={"margin": margin, "radius": radius, "family": H.label})


def default_ball_radii(space: GridSpace) -> tuple:
    return tuple(k * space.min_step for k in DEFAULT_BALL_STEPS)


@timed_operation("conjugate", "check_richness")
def check_richness(rate: RateField, exposed: ExposedSet, ball_radii: Optional[Sequence[float]] = None,
                   tolerance: float = DEFAULT_TOLERANCE) -> CheckReport:
    """inf of the rate over every lattice ball vs its inf over the exposed part of the ball"""
    space = rate.space
    space.require_same(exposed.space)
    radii = tuple(ball_radii) if ball_radii is not None else default_ball_radii(space)
    pts = space.points
    distances = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    R = rate.values
    worst, witness = 0.0, {}
    for radius in radii:
        balls = distances <= radius + ON_GRID_TOLERANCE * space.min_step
        inf_all = np.where(balls, R[None, :], np.inf).min(axis=1)
        inf_exposed = np.where(balls & exposed.mask[None, :], R[None, :], np.inf).min(axis=1)
        with np.errstate(invalid='ignore'):
            gap = np.where(inf_exposed == inf_all, 0.0, inf_exposed - inf_all)
        center = int(np.argmax(gap))
        if gap[center] > worst or not witness:
            worst = max(worst, float(gap[center]))
            witness = {"center": pts[center].tolist(), "radius": radius,
                       "inf_rate": float(inf_all[center]), "inf_rate_exposed": float(inf_exposed[center])}
    passed = worst <= tolerance
    logger.info(f"Richness: worst gap {worst} ({'pass' if passed else 'fail'})")
    return CheckReport(check="richness", passed=passed, worst_violation=worst, witness=witness,
                       details={"ball_radii": list(radii), "tolerance": tolerance, "label": exposed.label})


def point_index_map(H: TestingFamily, space: GridSpace) -> np.ndarray:
    """Member index of f_x for every grid point x"""
    if H.parameters.shape[1] != space.dim:
        raise FamilyError("Family parameters are not grid points", {"parameter_dim": H.parameters.shape[1]})
    mapping = np.full(space.size, -1)
    for j, p in enumerate(H.parameters):
        try:
            x = space.index_of(p)
        except GridError:
            continue
        if mapping[x] >= 0:
            raise FamilyError(f"Two members are indexed by the grid point {p.tolist()}")
        mapping[x] = j
    if np.any(mapping < 0):
        missing = space.points[mapping < 0][0].tolist()
        raise FamilyError(f"Family is not indexed by grid points; no member for {missing}")
    return mapping


@timed_operation("conjugate", "exposing_family_check")
def exposing_family_check(model: EntropyModel, H: TestingFamily, source: str = "auto",
                          tolerance: float = DEFAULT_TOLERANCE, margin: float = DEFAULT_MARGIN,
                          radius: Optional[float] = None) -> CheckReport:
    """psi(f_x) = 0 on both sides and f_x(y) < sup_a f_a(y) for y != x; on pass the
    conclusion (everything exposed, rate = sup of the family) is verified as well"""
    space = model.space
    mapping = point_index_map(H, space)
    F = H.matrix(space)
    envelope = F.max(axis=0)
    entropies = family_entropies(model, H, source, tolerance)

    entropy_gap = 0.0
    for j in mapping:
        record = entropies[j]
        entropy_gap = max(entropy_gap, abs(record.lower), abs(record.upper))
    entropy_ok = entropy_gap <= tolerance

    strict_failures = []
    for x, j in enumerate(mapping):
        others = np.ones(space.size, dtype=bool)
        others[x] = False
        if np.any(F[j][others] >= envelope[others]):
            strict_failures.append(x)
    strict_ok = not strict_failures

    conclusion: Dict[str, Any] = {}
    if entropy_ok and strict_ok:
        rate = conjugate_rate(model, H, source, tolerance, entropies)
        exposed = detect_exposed(model, H, rate, margin, radius, source, tolerance, entropies)
        rate_gap = float(np.max(np.abs(rate.values - envelope)))
        conclusion = {"all_exposed": bool(exposed.mask.all()), "rate_equals_envelope": rate_gap <= tolerance,
                      "rate_gap": rate_gap}
    passed = entropy_ok and strict_ok and all(v for k, v in conclusion.items() if k != "rate_gap")
    logger.info(f"Exposing family check for {H.label}: {'pass' if passed else 'fail'}")
    return CheckReport(
        check="exposing_family", passed=passed,
        worst_violation=entropy_gap if not entropy_ok else (0.0 if strict_ok else math.inf),
        witness={"strict_failures": [space.points[x].tolist() for x in strict_failures[:10]]},
        details={"entropy_zero": entropy_ok, "entropy_gap": entropy_gap, "strict_domination": strict_ok,
                 "conclusion": conclusion, "label": GRID_CERTIFIED},
    )
