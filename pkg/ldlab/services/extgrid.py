"""
Extended reals, discretized box state spaces and functions on them.

Values of grid functions live in R u {-inf}. Negative infinity is carried by an
explicit support mask instead of a float sentinel, so the -inf * 0 = 0 masking
convention is applied on purpose, never by IEEE accident. Semicontinuity on a
finite grid is a declared tag: it selects which checks apply, it is not computed.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property, total_ordering
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import ndimage

from ldlab.error_handlers import ExtendedArithmeticError, GridError, SpaceMismatchError

logger = logging.getLogger(__name__)

# Coordinates are rounded so that grids and parameter grids built from the same
# spec string produce identical floats.
COORD_DECIMALS = 12
ON_GRID_TOLERANCE = 1e-6

PointSet = np.ndarray


class Extent(str, enum.Enum):
    FINITE = "finite"
    NEG_INF = "neg_inf"
    POS_INF = "pos_inf"


_RANK = {Extent.NEG_INF: 0, Extent.FINITE: 1, Extent.POS_INF: 2}


@total_ordering
@dataclass(frozen=True)
class ExtendedValue:
    """A real number extended with -inf and +inf"""

    kind: Extent
    value: float = 0.0

    @classmethod
    def finite(cls, value: float) -> "ExtendedValue":
        if not math.isfinite(value):
            return cls.from_float(value)
        return cls(Extent.FINITE, float(value))

    @classmethod
    def from_float(cls, value: float) -> "ExtendedValue":
        value = float(value)
        if math.isnan(value):
            raise ExtendedArithmeticError("NaN has no extended-real counterpart")
        if value == math.inf:
            return POS_INF
        if value == -math.inf:
            return NEG_INF
        return cls(Extent.FINITE, value)

    @property
    def is_finite(self) -> bool:
        return self.kind is Extent.FINITE

    def to_float(self) -> float:
        if self.kind is Extent.NEG_INF:
            return -math.inf
        if self.kind is Extent.POS_INF:
            return math.inf
        return self.value

    def __float__(self) -> float:
        return self.to_float()

    def __add__(self, other: Union["ExtendedValue", float]) -> "ExtendedValue":
        other = _coerce(other)
        kinds = {self.kind, other.kind}
        if kinds == {Extent.NEG_INF, Extent.POS_INF}:
            raise ExtendedArithmeticError("NEG_INF + POS_INF is undefined")
        if Extent.NEG_INF in kinds:
            return NEG_INF
        if Extent.POS_INF in kinds:
            return POS_INF
        return ExtendedValue.finite(self.value + other.value)

    __radd__ = __add__

    def __neg__(self) -> "ExtendedValue":
        if self.kind is Extent.NEG_INF:
            return POS_INF
        if self.kind is Extent.POS_INF:
            return NEG_INF
        return ExtendedValue.finite(-self.value)

    def __sub__(self, other: Union["ExtendedValue", float]) -> "ExtendedValue":
        return self + (-_coerce(other))

    def __rsub__(self, other: Union["ExtendedValue", float]) -> "ExtendedValue":
        return _coerce(other) + (-self)

    def __mul__(self, factor: float) -> "ExtendedValue":
        factor = float(factor)
        if factor == 0.0:
            # -inf * 0 = 0
            return ZERO
        if self.kind is Extent.FINITE:
            return ExtendedValue.finite(self.value * factor)
        return self if factor > 0 else -self

    __rmul__ = __mul__

    def masked(self, keep: bool) -> "ExtendedValue":
        """Masking product with an indicator: self * 1 or self * 0 = 0"""
        return self if keep else ZERO

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = ExtendedValue.from_float(other)
        if not isinstance(other, ExtendedValue):
            return NotImplemented
        return self.kind is other.kind and self.value == other.value

    def __lt__(self, other: Union["ExtendedValue", float]) -> bool:
        other = _coerce(other)
        if self.kind is not other.kind:
            return _RANK[self.kind] < _RANK[other.kind]
        return self.value < other.value

    def __hash__(self) -> int:
        return hash((self.kind, self.value))

    def __str__(self) -> str:
        if self.kind is Extent.NEG_INF:
            return "-inf"
        if self.kind is Extent.POS_INF:
            return "inf"
        return repr(self.value)

    def __repr__(self) -> str:
        return f"ExtendedValue({self})"


NEG_INF = ExtendedValue(Extent.NEG_INF)
POS_INF = ExtendedValue(Extent.POS_INF)
ZERO = ExtendedValue(Extent.FINITE, 0.0)


def _coerce(value: Union[ExtendedValue, float]) -> ExtendedValue:
    if isinstance(value, ExtendedValue):
        return value
    return ExtendedValue.from_float(value)


def axis_values(lower: float, upper: float, count: int) -> np.ndarray:
    """Equispaced coordinates shared by grids and parameter grids"""
    return np.round(np.linspace(lower, upper, count), COORD_DECIMALS)


class GridSpace(BaseModel):
    """Box [lower, upper] in R^d sampled on a regular lattice"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    points_per_axis: Tuple[int, ...]

    model_config = ConfigDict(frozen=True)

    @field_validator('points_per_axis')
    @classmethod
    def validate_points(cls, v):
        if not v:
            raise ValueError('At least one axis is required')
        for i, count in enumerate(v):
            if count < 2:
                raise ValueError(f'Axis {i+1} needs at least 2 points')
        return v

    @model_validator(mode='after')
    def validate_bounds(self):
        if not (len(self.lower) == len(self.upper) == len(self.points_per_axis)):
            raise ValueError('lower, upper and points_per_axis must have the same length')
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f'Axis {i+1} bounds must be finite')
            if not lo < hi:
                raise ValueError(f'Axis {i+1} requires lower < upper (got {lo} >= {hi})')
        return self

    @classmethod
    def line(cls, lower: float, upper: float, points: int) -> "GridSpace":
        return cls(lower=(float(lower),), upper=(float(upper),), points_per_axis=(int(points),))

    @property
    def dim(self) -> int:
        return len(self.points_per_axis)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.points_per_axis)

    @property
    def size(self) -> int:
        return int(np.prod(self.points_per_axis))

    @property
    def step(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.points_per_axis))

    @property
    def min_step(self) -> float:
        return min(self.step)

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(axis_values(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.points_per_axis))

    @cached_property
    def points(self) -> np.ndarray:
        """(size, dim) coordinates in flat index order"""
        mesh = np.meshgrid(*self.axes, indexing='ij')
        return np.stack([m.ravel() for m in mesh], axis=1)

    def index_of(self, point: Union[float, Sequence[float]]) -> int:
        coords = np.atleast_1d(np.asarray(point, dtype=float))
        if coords.shape != (self.dim,):
            raise GridError(f"Point {list(coords)} does not have dimension {self.dim}")
        multi = []
        for i, (c, lo, h, n) in enumerate(zip(coords, self.lower, self.step, self.points_per_axis)):
            k = (c - lo) / h
            nearest = int(round(k))
            if abs(k - nearest) > ON_GRID_TOLERANCE or not 0 <= nearest < n:
                raise GridError(f"Point {list(coords)} is not a grid point",
                                {"axis": i, "offset": float(k)})
            multi.append(nearest)
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def coords_of(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise GridError(f"Index {index} outside 0..{self.size - 1}")
        return self.points[index]

    def contains_box(self, lower: Sequence[float], upper: Sequence[float]) -> bool:
        return all(lo <= a and b <= hi for lo, hi, a, b in zip(self.lower, self.upper, lower, upper))

    def same_as(self, other: "GridSpace") -> bool:
        return (self.lower, self.upper, self.points_per_axis) == (other.lower, other.upper, other.points_per_axis)

    def require_same(self, other: "GridSpace"):
        if not self.same_as(other):
            raise SpaceMismatchError(details={"left": self.model_dump(), "right": other.model_dump()})


# ----- point-sets -----

def empty_set(space: GridSpace) -> PointSet:
    return np.zeros(space.size, dtype=bool)


def full_set(space: GridSpace) -> PointSet:
    return np.ones(space.size, dtype=bool)


def box_set(space: GridSpace, lower: Sequence[float], upper: Sequence[float]) -> PointSet:
    """Grid points inside the closed box [lower, upper]"""
    pts = space.points
    eps = ON_GRID_TOLERANCE * space.min_step
    lo = np.asarray(lower, dtype=float) - eps
    hi = np.asarray(upper, dtype=float) + eps
    return np.all((pts >= lo) & (pts <= hi), axis=1)


def lattice_ball(space: GridSpace, center: Union[float, Sequence[float]], radius: float) -> PointSet:
    """Grid points within Euclidean distance radius of a grid point"""
    if radius < 0:
        raise GridError(f"Radius must be non-negative (got {radius})")
    idx = space.index_of(center)
    return ball_around_index(space, idx, radius)


def ball_around_index(space: GridSpace, index: int, radius: float) -> PointSet:
    pts = space.points
    dist = np.sqrt(np.sum((pts - pts[index]) ** 2, axis=1))
    return dist <= radius + ON_GRID_TOLERANCE * space.min_step


def _structure(space: GridSpace) -> np.ndarray:
    return ndimage.generate_binary_structure(space.dim, 1)


def erode(space: GridSpace, points: PointSet) -> PointSet:
    """Grid interior: one-cell erosion; the box boundary is not a boundary of E"""
    grid = np.asarray(points, dtype=bool).reshape(space.shape)
    return ndimage.binary_erosion(grid, structure=_structure(space), border_value=1).ravel()


def dilate(space: GridSpace, points: PointSet) -> PointSet:
    """Grid closure: one-cell dilation"""
    grid = np.asarray(points, dtype=bool).reshape(space.shape)
    return ndimage.binary_dilation(grid, structure=_structure(space)).ravel()


# ----- grid functions -----

class Regularity(str, enum.Enum):
    CONTINUOUS = "continuous"
    LOWER = "lower-semicontinuous"
    UPPER = "upper-semicontinuous"
    MEASURABLE = "measurable"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class GridFunction(BaseModel):
    """Function from grid points to R u {-inf}; support marks the finite entries"""

    space: GridSpace
    values: np.ndarray
    support: np.ndarray
    regularity: Regularity = Regularity.CONTINUOUS
    bounded_above: bool = True

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode='after')
    def validate_shapes(self):
        size = self.space.size
        if self.values.shape != (size,) or self.support.shape != (size,):
            raise ValueError(f'values and support must have length {size}')
        if self.support.dtype != bool:
            raise ValueError('support must be boolean')
        if not np.all(np.isfinite(self.values[self.support])):
            raise ValueError('finite entries must be finite floats; +inf is not allowed')
        return self

    @classmethod
    def from_array(cls, space: GridSpace, array: Sequence[float],
                   regularity: Regularity = Regularity.CONTINUOUS,
                   bounded_above: bool = True) -> "GridFunction":
        data = np.asarray(array, dtype=float).ravel()
        if data.shape != (space.size,):
            raise GridError(f"Expected {space.size} values, got {data.size}")
        if np.any(np.isnan(data)):
            raise GridError("Grid functions cannot contain NaN")
        if np.any(data == np.inf):
            raise GridError("POS_INF never appears in a grid function")
        support = data > -np.inf
        values = np.where(support, data, 0.0)
        return cls(space=space, values=_frozen(values), support=_frozen(support),
                   regularity=regularity, bounded_above=bounded_above)

    @classmethod
    def from_callable(cls, space: GridSpace, fn: Callable[[np.ndarray], np.ndarray],
                      regularity: Regularity = Regularity.CONTINUOUS) -> "GridFunction":
        """fn receives the (size, dim) point array; 1-d callables receive a flat axis"""
        pts = space.points
        arg = pts[:, 0] if space.dim == 1 else pts
        return cls.from_array(space, np.broadcast_to(fn(arg), (space.size,)), regularity)

    @classmethod
    def constant(cls, space: GridSpace, c: float) -> "GridFunction":
        return cls.from_array(space, np.full(space.size, float(c)))

    @classmethod
    def neg_inf(cls, space: GridSpace) -> "GridFunction":
        return cls.from_array(space, np.full(space.size, -np.inf))

    def as_array(self) -> np.ndarray:
        """Float view with -inf off the support"""
        return np.where(self.support, self.values, -np.inf)

    def value_at(self, index: int) -> ExtendedValue:
        if not self.support[index]:
            return NEG_INF
        return ExtendedValue.finite(float(self.values[index]))

    @property
    def is_neg_inf(self) -> bool:
        return not bool(np.any(self.support))

    def max_value(self) -> ExtendedValue:
        if self.is_neg_inf:
            return NEG_INF
        return ExtendedValue.finite(float(np.max(self.values[self.support])))

    def finite_values(self) -> np.ndarray:
        return np.unique(self.values[self.support])

    def with_regularity(self, regularity: Regularity) -> "GridFunction":
        return self.model_copy(update={"regularity": regularity})

    def _rebuild(self, array: np.ndarray, regularity: Optional[Regularity] = None) -> "GridFunction":
        return GridFunction.from_array(self.space, array, regularity or self.regularity, self.bounded_above)

    def shift(self, c: float) -> "GridFunction":
        return self._rebuild(self.as_array() + float(c))

    def scale(self, t: float) -> "GridFunction":
        t = float(t)
        if t < 0:
            raise GridError("Negative scaling would produce +inf values")
        if t == 0.0:
            # -inf * 0 = 0
            return GridFunction.constant(self.space, 0.0).with_regularity(self.regularity)
        return self._rebuild(self.as_array() * t)

    def maximum(self, other: "GridFunction") -> "GridFunction":
        self.space.require_same(other.space)
        return self._rebuild(np.maximum(self.as_array(), other.as_array()), _weakest(self, other))

    def minimum(self, other: "GridFunction") -> "GridFunction":
        self.space.require_same(other.space)
        return self._rebuild(np.minimum(self.as_array(), other.as_array()), _weakest(self, other))

    def clip_above(self, level: float) -> "GridFunction":
        """f ^ level"""
        return self._rebuild(np.minimum(self.as_array(), float(level)))

    def clip_below(self, level: float) -> "GridFunction":
        """f v level"""
        return self._rebuild(np.maximum(self.as_array(), float(level)))

    def level_set(self, c: float, strict: bool = False) -> PointSet:
        if strict:
            return self.support & (self.values > c)
        return self.support & (self.values >= c)

    def le(self, other: "GridFunction") -> bool:
        """Pointwise f <= g"""
        self.space.require_same(other.space)
        return bool(np.all(self.as_array() <= other.as_array()))


def _weakest(f: GridFunction, g: GridFunction) -> Regularity:
    return f.regularity if f.regularity == g.regularity else Regularity.MEASURABLE


def mask(f: GridFunction, points: PointSet, regularity: Optional[Regularity] = None) -> GridFunction:
    """f on the point-set, NEG_INF elsewhere"""
    points = np.asarray(points, dtype=bool)
    if points.shape != (f.space.size,):
        raise GridError(f"Point-set must have length {f.space.size}")
    support = f.support & points
    values = np.where(support, f.values, 0.0)
    return GridFunction(space=f.space, values=_frozen(values), support=_frozen(support),
                        regularity=regularity or Regularity.MEASURABLE,
                        bounded_above=f.bounded_above)


def indicator(space: GridSpace, points: PointSet) -> GridFunction:
    """-inf * 1_{A^c}: zero on A, NEG_INF on the complement"""
    return mask(GridFunction.constant(space, 0.0), points)


def convex_combination(f: GridFunction, g: GridFunction, lam: float) -> GridFunction:
    """lam * f + (1 - lam) * g with the -inf * 0 = 0 convention"""
    f.space.require_same(g.space)
    if lam == 1.0:
        return f
    if lam == 0.0:
        return g
    array = lam * f.as_array() + (1.0 - lam) * g.as_array()
    return GridFunction.from_array(f.space, array, _weakest(f, g))
