"""
Concentrations: monotone set functions J on grid point-sets with values in [-inf, 0].

J(empty) = -inf and J(E) = 0. Concentrations come from a max-plus density (the
finite-space oracle, maxitive by construction), from capacity limits of an
entropy model, or from the entropy path itself.
"""
from __future__ import annotations

import enum
import logging
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence

import numpy as np

from ldlab.error_handlers import ConcentrationError
from ldlab.models import CheckReport, PROXY_DISCLOSURE
from ldlab.services.extgrid import (
    NEG_INF,
    ZERO,
    ExtendedValue,
    GridFunction,
    GridSpace,
    PointSet,
    ball_around_index,
    box_set,
    dilate,
    full_set,
    indicator,
)
from ldlab.services.metrics import timed_operation

if TYPE_CHECKING:
    from ldlab.services.entropy import EntropyModel

logger = logging.getLogger(__name__)


class ConcentrationKind(str, enum.Enum):
    MAXPLUS = "maxplus-density"
    CAPACITY = "capacity-limit"
    ENTROPY = "derived-from-entropy"
    CUSTOM = "custom"


class Concentration:
    """Set function J: point-set -> [-inf, 0]"""

    def __init__(self, space: GridSpace, evaluator: Callable[[PointSet], ExtendedValue],
                 kind: ConcentrationKind = ConcentrationKind.CUSTOM, maxitive: bool = False,
                 description: str = ""):
        self.space = space
        self._evaluator = evaluator
        self.kind = kind
        self.maxitive = maxitive
        self.description = description or kind.value
        self._cache: Dict[bytes, ExtendedValue] = {}

    def eval(self, points: PointSet) -> ExtendedValue:
        points = np.asarray(points, dtype=bool)
        if points.shape != (self.space.size,):
            raise ConcentrationError(f"Point-set must have length {self.space.size}")
        if not points.any():
            return NEG_INF
        key = np.packbits(points).tobytes()
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        value = self._evaluator(points)
        if not isinstance(value, ExtendedValue):
            value = ExtendedValue.from_float(value)
        if value > ZERO:
            raise ConcentrationError(f"Concentration value {value} is outside [-inf, 0]",
                                     {"kind": self.kind.value})
        self._cache[key] = value
        return value

    __call__ = eval

    def __repr__(self) -> str:
        return f"Concentration(kind={self.kind.value}, description={self.description!r})"


def eval_concentration(J: Concentration, points: PointSet) -> ExtendedValue:
    return J.eval(points)


class MaxPlusDensity:
    """Maxitive concentration J(A) = max over A of a density j with max j = 0"""

    def __init__(self, j: GridFunction):
        top = j.max_value()
        if top != ZERO:
            raise ConcentrationError(f"Max-plus density must attain 0 as its maximum (got {top})")
        self.j = j

    @classmethod
    def from_values(cls, space: GridSpace, values: Sequence[float]) -> "MaxPlusDensity":
        return cls(GridFunction.from_array(space, values))

    def eval(self, points: PointSet) -> ExtendedValue:
        support = self.j.support & points
        if not support.any():
            return NEG_INF
        return ExtendedValue.finite(float(np.max(self.j.values[support])))

    def concentration(self) -> Concentration:
        return Concentration(self.j.space, self.eval, ConcentrationKind.MAXPLUS, maxitive=True,
                             description="max-plus density")


def maxplus_concentration(space: GridSpace, values: Sequence[float]) -> Concentration:
    return MaxPlusDensity.from_values(space, values).concentration()


def _tail_aggregate(values: List[float], mode: str) -> ExtendedValue:
    value = min(values) if mode == "lower" else max(values)
    return ExtendedValue.from_float(min(value, 0.0))


def _check_mode(mode: str):
    if mode not in ("lower", "upper"):
        raise ConcentrationError(f"Mode must be 'lower' or 'upper' (got '{mode}')")


def capacity_limit_concentration(model: "EntropyModel", mode: str = "upper") -> Concentration:
    """J(A) = tail-window min (lower) or max (upper) of (1/n) log mu_n(A), clamped to <= 0"""
    _check_mode(mode)
    if not model.supports_capacity:
        raise ConcentrationError(f"Model '{model.model_id}' has no capacity evaluator")
    tail = model.tail_ladder

    def evaluator(points: PointSet) -> ExtendedValue:
        return _tail_aggregate([model.log_capacity(points, n) / n for n in tail], mode)

    return Concentration(model.space, evaluator, ConcentrationKind.CAPACITY,
                         description=f"{mode} capacity limit of {model.model_id} ({PROXY_DISCLOSURE})")


def entropy_concentration(model: "EntropyModel", mode: str = "upper") -> Concentration:
    """J(A) = asymptotic entropy of -inf * 1_{A^c}, evaluated through the expectation path"""
    _check_mode(mode)
    tail = model.tail_ladder

    def evaluator(points: PointSet) -> ExtendedValue:
        masked = indicator(model.space, points)
        return _tail_aggregate([model.log_expectation(masked, n) / n for n in tail], mode)

    return Concentration(model.space, evaluator, ConcentrationKind.ENTROPY,
                         description=f"{mode} entropy concentration of {model.model_id} ({PROXY_DISCLOSURE})")


def _excess(lhs: float, rhs: float) -> float:
    """Amount by which lhs <= rhs is violated, in [0, inf]"""
    if lhs == -np.inf or rhs == np.inf:
        return 0.0
    if lhs == np.inf or rhs == -np.inf:
        return np.inf
    return max(0.0, lhs - rhs)


def _random_cover(space: GridSpace, closed: PointSet, rng: np.random.Generator) -> List[Dict]:
    """Lattice balls around points of the closed set, completed with singletons"""
    members = np.flatnonzero(closed)
    cover = []
    covered = np.zeros(space.size, dtype=bool)
    for idx in rng.choice(members, size=min(len(members), int(rng.integers(1, 4))), replace=False):
        radius = float(rng.integers(0, 4)) * space.min_step
        ball = ball_around_index(space, int(idx), radius)
        cover.append({"center": int(idx), "radius": radius, "points": ball})
        covered |= ball
    for idx in np.flatnonzero(closed & ~covered):
        cover.append({"center": int(idx), "radius": 0.0, "points": ball_around_index(space, int(idx), 0.0)})
    return cover


@timed_operation("capacity", "check_weak_maxitivity")
def check_weak_maxitivity(J: Concentration, cover_trials: int = 50, tolerance: float = 1e-2,
                          seed: int = 0) -> CheckReport:
    """Worst violation of J(C) <= max_i J(O_i) over sampled closed sets and open ball covers"""
    if cover_trials < 1:
        raise ConcentrationError("cover_trials must be at least 1")
    space = J.space
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness: Dict = {}
    for trial in range(cover_trials):
        if trial == 0:
            closed = full_set(space)
            cover = [{"center": i, "radius": 0.0, "points": ball_around_index(space, i, 0.0)}
                     for i in range(space.size)]
        else:
            seed_points = rng.random(space.size) < rng.uniform(0.05, 0.5)
            if not seed_points.any():
                seed_points[rng.integers(space.size)] = True
            closed = dilate(space, seed_points)
            cover = _random_cover(space, closed, rng)
        lhs = J.eval(closed).to_float()
        rhs = max(J.eval(member["points"]).to_float() for member in cover)
        violation = _excess(lhs, rhs)
        logger.debug(f"Weak maxitivity trial {trial}: J(C)={lhs} max J(O)={rhs}")
        if violation > worst or not witness:
            worst = max(worst, violation)
            witness = {
                "trial": trial,
                "closed_set_size": int(closed.sum()),
                "cover": [{"center": space.coords_of(m["center"]).tolist(), "radius": m["radius"]} for m in cover[:20]],
                "cover_size": len(cover),
                "J_closed": lhs,
                "max_J_cover": rhs,
            }
    passed = worst <= tolerance
    logger.info(f"Weak maxitivity of {J.description}: worst violation {worst} ({'pass' if passed else 'fail'})")
    return CheckReport(check="weak_maxitivity", passed=passed, worst_violation=worst, witness=witness,
                       details={"cover_trials": cover_trials, "tolerance": tolerance, "seed": seed})


def trimmed_box(space: GridSpace, cells: int) -> PointSet:
    """Sub-box obtained by removing the given number of cells on every side of every axis"""
    lower = [lo + cells * h for lo, h in zip(space.lower, space.step)]
    upper = [hi - cells * h for hi, h in zip(space.upper, space.step)]
    if any(a > b for a, b in zip(lower, upper)):
        return np.zeros(space.size, dtype=bool)
    return box_set(space, lower, upper)


@timed_operation("capacity", "check_tightness")
def check_tightness(J: Concentration, levels: Sequence[float] = (1.0, 2.0)) -> CheckReport:
    """Smallest nested sub-box K per level with J(K^c) < -level"""
    if not levels:
        raise ConcentrationError("At least one tightness level is required")
    space = J.space
    max_trim = (min(space.points_per_axis) - 1) // 2
    per_level = []
    worst = 0.0
    for level in levels:
        best: Optional[int] = None
        complement_value = None
        for cells in range(1, max_trim + 1):
            K = trimmed_box(space, cells)
            value = J.eval(~K)
            if value < ExtendedValue.finite(-level):
                best, complement_value = cells, value
            else:
                break
        if best is None:
            outer = J.eval(~trimmed_box(space, 1)).to_float()
            worst = max(worst, _excess(outer, -level))
            per_level.append({"level": level, "found": False, "J_complement": outer})
            logger.debug(f"Tightness level {level}: no sub-box found")
        else:
            per_level.append({
                "level": level,
                "found": True,
                "K_lower": [lo + best * h for lo, h in zip(space.lower, space.step)],
                "K_upper": [hi - best * h for hi, h in zip(space.upper, space.step)],
                "J_complement": complement_value.to_float(),
            })
    passed = all(entry["found"] for entry in per_level)
    logger.info(f"Tightness of {J.description}: {'pass' if passed else 'fail'}")
    return CheckReport(check="tightness", passed=passed, worst_violation=worst,
                       witness={"levels": per_level})
