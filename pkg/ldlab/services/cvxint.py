"""
The convex integral phi_J(f) = sup_c {c + J({f >= c})}, rate fields, minimal rates
and the checks tying integrals, concentrations and rates together.
"""
from __future__ import annotations

import enum
import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ldlab.error_handlers import GridError
from ldlab.models import CheckReport
from ldlab.services.concentration import Concentration, _excess
from ldlab.services.extgrid import (
    NEG_INF,
    POS_INF,
    ExtendedValue,
    GridFunction,
    GridSpace,
    PointSet,
    Regularity,
    ball_around_index,
    convex_combination,
    mask,
)
from ldlab.services.metrics import timed_operation

logger = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
EXHAUSTIVE_LIMIT = 12


class RateProvenance(str, enum.Enum):
    MINIMAL = "minimal"
    CONJUGATE = "conjugate"
    ANALYTIC = "analytic"


class RateField(BaseModel):
    """Rate function on the grid with values in [0, +inf]"""

    space: GridSpace
    values: np.ndarray
    provenance: RateProvenance
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode='after')
    def validate_values(self):
        if self.values.shape != (self.space.size,):
            raise ValueError(f'rate must have {self.space.size} values')
        if np.any(np.isnan(self.values)):
            raise ValueError('rate values cannot be NaN')
        if np.any(self.values < 0):
            raise ValueError('rate values must be non-negative; NEG_INF is forbidden')
        return self

    @classmethod
    def from_array(cls, space: GridSpace, values: Sequence[float],
                   provenance: RateProvenance = RateProvenance.ANALYTIC,
                   diagnostics: Optional[Dict[str, Any]] = None) -> "RateField":
        data = np.array(values, dtype=float).ravel()
        if data.shape != (space.size,):
            raise GridError(f"Expected {space.size} rate values, got {data.size}")
        if np.any(data < 0) or np.any(np.isnan(data)):
            raise GridError("Rate values must lie in [0, inf]")
        data.setflags(write=False)
        return cls(space=space, values=data, provenance=provenance, diagnostics=diagnostics or {})

    def value_at(self, index: int) -> ExtendedValue:
        return ExtendedValue.from_float(float(self.values[index]))

    def inf_over(self, points: PointSet) -> float:
        """inf over the point-set; +inf for the empty set"""
        points = np.asarray(points, dtype=bool)
        if not points.any():
            return math.inf
        return float(np.min(self.values[points]))

    def sup_of_difference(self, f: GridFunction) -> float:
        """sup over the grid of f - I (I = +inf or f = -inf give -inf)"""
        self.space.require_same(f.space)
        return float(np.max(f.as_array() - self.values))


def convex_integral(J: Concentration, f: GridFunction, strict: bool = False) -> ExtendedValue:
    """phi_J(f) with c scanned over the distinct finite values of f"""
    J.space.require_same(f.space)
    if f.is_neg_inf:
        return NEG_INF
    levels = np.sort(f.finite_values())
    best = NEG_INF
    for k, c in enumerate(levels):
        if strict:
            # {f > c'} for c' just below c equals {f >= c}
            below = levels[k - 1] if k > 0 else c - 1.0
            points = f.level_set(below, strict=True)
        else:
            points = f.level_set(c)
        candidate = J.eval(points) + float(c)
        if candidate > best:
            best = candidate
    return best


def maxplus_oracle(j: GridFunction, f: GridFunction) -> ExtendedValue:
    """max over the grid of f + j"""
    combined = f.as_array() + j.as_array()
    return ExtendedValue.from_float(float(np.max(combined)))


def default_radii(space: GridSpace) -> Tuple[float, ...]:
    """Geometric ladder from half the box width down to one grid step, then 0"""
    half = max(hi - lo for lo, hi in zip(space.lower, space.upper)) / 2.0
    step = space.min_step
    radii = []
    r = half
    while r > step:
        radii.append(r)
        r /= 2.0
    radii.extend([step, 0.0])
    return tuple(radii)


def minimal_rate_at(J: Concentration, index: int, radii: Sequence[float]) -> ExtendedValue:
    """-inf over the radius ladder of J(ball(x, r))"""
    lowest = min(J.eval(ball_around_index(J.space, index, r)) for r in radii)
    return -lowest


@timed_operation("capacity", "minimal_rate")
def minimal_rate(J: Concentration, radii: Optional[Sequence[float]] = None,
                 points: Optional[PointSet] = None) -> RateField:
    """Minimal rate function through the neighbourhood representation.

    When points is given, only those grid points are evaluated and the rest are +inf.
    """
    radii = tuple(radii) if radii is not None else default_radii(J.space)
    if not radii:
        raise GridError("Radius ladder cannot be empty")
    if any(b > a for a, b in zip(radii, radii[1:])):
        raise GridError("Radius ladder must be decreasing")
    values = np.full(J.space.size, np.inf)
    indices = range(J.space.size) if points is None else np.flatnonzero(points)
    for index in indices:
        values[index] = minimal_rate_at(J, int(index), radii).to_float()
    logger.info(f"Minimal rate of {J.description} over {len(radii)} radii")
    return RateField.from_array(J.space, np.maximum(values, 0.0), RateProvenance.MINIMAL,
                                {"radii": list(radii)})


def _equality_violation(a: ExtendedValue, b: ExtendedValue) -> float:
    if a == b:
        return 0.0
    if not (a.is_finite and b.is_finite):
        return math.inf
    return abs(a.value - b.value)


def _inequality_violation(lhs: ExtendedValue, rhs: ExtendedValue) -> float:
    return _excess(lhs.to_float(), rhs.to_float())


def _all_subsets(size: int):
    for bits in itertools.product((False, True), repeat=size):
        yield np.array(bits, dtype=bool)


def _sample_subsets(size: int, trials: int, rng: np.random.Generator):
    for _ in range(trials):
        yield rng.random(size) < rng.uniform(0.1, 0.9)


def _dyadic_function(space: GridSpace, rng: np.random.Generator, neg_inf_share: float = 0.2) -> GridFunction:
    values = rng.integers(-16, 17, size=space.size) / 8.0
    values = np.where(rng.random(space.size) < neg_inf_share, -np.inf, values)
    return GridFunction.from_array(space, values, Regularity.MEASURABLE)


@timed_operation("verify", "check_duality_bounds")
def check_duality_bounds(J: Concentration, I: RateField, trials: int = 200, seed: int = 0,
                         tolerance: float = 1e-8) -> CheckReport:
    """Both set/function equivalences for the pair (J, I).

    On a grid with the discrete topology every subset is open and closed and every
    function is semicontinuous. Subsets are enumerated exhaustively up to 12 points.
    """
    space = J.space
    space.require_same(I.space)
    rng = np.random.default_rng(seed)
    exhaustive = space.size <= EXHAUSTIVE_LIMIT
    subsets = list(_all_subsets(space.size) if exhaustive else _sample_subsets(space.size, trials, rng))

    lower_set, upper_set = 0.0, 0.0
    lower_set_witness, upper_set_witness = None, None
    for points in subsets:
        minus_inf_I = -I.inf_over(points)
        J_value = J.eval(points).to_float()
        below = _excess(minus_inf_I, J_value + tolerance)
        above = _excess(J_value, minus_inf_I + tolerance)
        if below > lower_set:
            lower_set, lower_set_witness = below, np.flatnonzero(points).tolist()
        if above > upper_set:
            upper_set, upper_set_witness = above, np.flatnonzero(points).tolist()

    finite_I = I.values[np.isfinite(I.values)]
    big = float(np.max(finite_I)) + 1.0 if finite_I.size else 1.0
    functions: List[GridFunction] = []
    zero = GridFunction.constant(space, 0.0)
    for points in (subsets if exhaustive else subsets[:trials]):
        functions.append(mask(zero, points))
        functions.append(mask(GridFunction.constant(space, big), points))
    functions.extend(_dyadic_function(space, rng) for _ in range(trials))

    lower_fn, upper_fn = 0.0, 0.0
    lower_fn_witness, upper_fn_witness = None, None
    for f in functions:
        phi = convex_integral(J, f).to_float()
        sup = I.sup_of_difference(f)
        below = _excess(sup, phi + tolerance)
        above = _excess(phi, sup + tolerance)
        if below > lower_fn:
            lower_fn, lower_fn_witness = below, f.as_array().tolist()
        if above > upper_fn:
            upper_fn, upper_fn_witness = above, f.as_array().tolist()

    lower_consistent = (lower_set == 0.0) == (lower_fn == 0.0)
    upper_consistent = (upper_set == 0.0) == (upper_fn == 0.0)
    bounds_hold = lower_set == upper_set == lower_fn == upper_fn == 0.0
    if not (lower_consistent and upper_consistent):
        logger.warning("Set and function forms of the duality bounds disagree")
    logger.info(f"Duality bounds for {J.description}: lower={lower_set == 0.0} upper={upper_set == 0.0}")
    return CheckReport(
        check="duality_bounds",
        passed=lower_consistent and upper_consistent,
        worst_violation=max(lower_set, upper_set, lower_fn, upper_fn),
        witness={
            "lower_set": lower_set_witness,
            "upper_set": upper_set_witness,
            "lower_function": lower_fn_witness,
            "upper_function": upper_fn_witness,
        },
        details={
            "mode": "exhaustive" if exhaustive else "sampled",
            "subsets": len(subsets),
            "functions": len(functions),
            "lower": {"set_holds": lower_set == 0.0, "function_holds": lower_fn == 0.0,
                      "set_violation": lower_set, "function_violation": lower_fn,
                      "consistent": lower_consistent},
            "upper": {"set_holds": upper_set == 0.0, "function_holds": upper_fn == 0.0,
                      "set_violation": upper_set, "function_violation": upper_fn,
                      "consistent": upper_consistent},
            "bounds_hold": bounds_hold,
        },
    )


@timed_operation("verify", "check_integral_properties")
def check_integral_properties(J: Concentration, trials: int = 50, seed: int = 0,
                              tolerance: float = 1e-8) -> CheckReport:
    """Worst violation per property b1-b5, plus b6-b7 when J is maxitive"""
    if trials < 1:
        raise GridError("trials must be at least 1")
    space = J.space
    rng = np.random.default_rng(seed)
    zero = GridFunction.constant(space, 0.0)
    violations = {name: 0.0 for name in ("b1", "b2", "b3", "b4", "b5")}
    if J.maxitive:
        violations.update({"b6": 0.0, "b7": 0.0})
    witnesses: Dict[str, Any] = {}

    def note(name: str, value: float, witness: Any):
        if value > violations[name]:
            violations[name] = value
            witnesses[name] = witness

    note("b2", _equality_violation(convex_integral(J, zero), ExtendedValue.finite(0.0)), "phi(0)")
    m_ladder = (1, 2, 4, 8, 16, 32, 64)

    for trial in range(trials):
        f = _dyadic_function(space, rng)
        g = _dyadic_function(space, rng)
        points = rng.random(space.size) < 0.5
        phi_f = convex_integral(J, f)
        phi_g = convex_integral(J, g)

        note("b1", _equality_violation(convex_integral(J, mask(zero, points)), J.eval(points)), trial)

        shift = float(rng.integers(-20, 21)) / 8.0
        note("b3", _equality_violation(convex_integral(J, f.shift(shift)), phi_f + shift), trial)

        upper = f.maximum(g)
        phi_upper = convex_integral(J, upper)
        note("b4", _inequality_violation(phi_f, phi_upper), trial)

        previous = NEG_INF
        for m in m_ladder:
            capped = convex_integral(J, f.clip_above(m))
            note("b5", _inequality_violation(previous, capped), trial)
            previous = capped
        note("b5", _equality_violation(previous, phi_f), trial)
        previous = POS_INF
        for m in m_ladder:
            floored = convex_integral(J, f.clip_below(-m))
            note("b5", _inequality_violation(floored, previous), trial)
            previous = floored
        expected = phi_f if phi_f >= ExtendedValue.finite(-m_ladder[-1]) else ExtendedValue.finite(-m_ladder[-1])
        note("b5", _equality_violation(previous, expected), trial)

        if J.maxitive:
            note("b6", _inequality_violation(phi_upper, max(phi_f, phi_g)), trial)
            for lam in LAMBDA_GRID:
                mixed = convex_integral(J, convex_combination(f, g, lam))
                bound = phi_f * lam + phi_g * (1.0 - lam)
                note("b7", _inequality_violation(mixed, bound), {"trial": trial, "lambda": lam})

    passed = all(v <= tolerance for v in violations.values())
    logger.info(f"Integral properties of {J.description}: {violations}")
    worst_name = max(violations, key=violations.get)
    return CheckReport(check="integral_properties", passed=passed,
                       worst_violation=violations[worst_name],
                       witness={"property": worst_name, "case": witnesses.get(worst_name)},
                       details={"violations": violations, "trials": trials, "tolerance": tolerance,
                                "maxitive": J.maxitive})
