"""
Closed-form entropy models.

Grid functions are extended to the line piecewise linearly (constant up to the
cell edge next to a -inf neighbour, linear beyond the box) and every linear piece
is integrated exactly against the density, so quadrature carries no truncation
error. Capacities are probabilities of unions of grid cells; the outermost cells
extend to infinity.
"""
from __future__ import annotations

import logging
import math
import re
from abc import abstractmethod
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_ndtr, logsumexp

from ldlab.error_handlers import ModelError, NumericFailure3
from ldlab.models import DEFAULT_N_LADDER, DEFAULT_TAIL_WINDOW
from ldlab.services.entropy import EntropyModel
from ldlab.services.extgrid import (
    POS_INF,
    ExtendedValue,
    GridFunction,
    GridSpace,
    PointSet,
    full_set,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-6
LOG_HALF = math.log(0.5)

DEFAULT_BOXES = {
    "laplace": (-3.0, 3.0, 601),
    "gaussian": (-4.0, 4.0, 801),
    "robust": (-4.0, 4.0, 801),
}


# ----- exact integrals -----

def log_int_exp(gamma: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log of the integral of e^{gamma t} over [a, b]; +inf when it diverges"""
    gamma, a, b = np.broadcast_arrays(np.asarray(gamma, float), np.asarray(a, float), np.asarray(b, float))
    with np.errstate(all='ignore'):
        width = b - a
        flat = np.log(width)
        rising = gamma * b + np.log(-np.expm1(-gamma * width)) - np.log(gamma)
        falling = gamma * a + np.log(-np.expm1(gamma * width)) - np.log(-gamma)
    return np.where(gamma > 0, rising, np.where(gamma < 0, falling, flat))


def log_ndtr_diff(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """log(Phi(hi) - Phi(lo)) for lo <= hi, evaluated on the side away from cancellation"""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(all='ignore'):
        return lb + np.log(-np.expm1(la - lb))


# ----- continuum extension -----

def linear_pieces(f: GridFunction, breakpoints: Sequence[float] = ()) -> Tuple[np.ndarray, ...]:
    """Pieces (u, v, x0, f0, slope) of the continuum extension on which it is finite"""
    x = f.space.axes[0]
    val, sup = f.values, f.support
    mids = (x[:-1] + x[1:]) / 2.0
    slopes = np.diff(val) / np.diff(x)
    both = sup[:-1] & sup[1:]
    left_only = sup[:-1] & ~sup[1:]
    right_only = ~sup[:-1] & sup[1:]

    u = [x[:-1][both], x[:-1][left_only], mids[right_only]]
    v = [x[1:][both], mids[left_only], x[1:][right_only]]
    x0 = [x[:-1][both], x[:-1][left_only], x[1:][right_only]]
    f0 = [val[:-1][both], val[:-1][left_only], val[1:][right_only]]
    s = [slopes[both], np.zeros(left_only.sum()), np.zeros(right_only.sum())]

    if sup[0]:
        u.append([-np.inf]); v.append([x[0]]); x0.append([x[0]]); f0.append([val[0]])
        s.append([slopes[0] if sup[1] else 0.0])
    if sup[-1]:
        u.append([x[-1]]); v.append([np.inf]); x0.append([x[-1]]); f0.append([val[-1]])
        s.append([slopes[-1] if sup[-2] else 0.0])

    pieces = [np.concatenate([np.asarray(p, dtype=float) for p in part]) for part in (u, v, x0, f0, s)]
    for b in breakpoints:
        u, v, x0, f0, s = pieces
        crossing = (u < b) & (v > b)
        if crossing.any():
            # crossing pieces keep [u, b]; their [b, v] halves are appended
            pieces = [
                np.concatenate([u, np.full(crossing.sum(), b)]),
                np.concatenate([np.where(crossing, b, v), v[crossing]]),
                np.concatenate([x0, x0[crossing]]),
                np.concatenate([f0, f0[crossing]]),
                np.concatenate([s, s[crossing]]),
            ]
    return tuple(pieces)


def cell_intervals(space: GridSpace, points: PointSet) -> Tuple[np.ndarray, np.ndarray]:
    """Maximal runs of the point-set as unions of cells (a, b]"""
    x = space.axes[0]
    padded = np.concatenate([[False], np.asarray(points, dtype=bool), [False]])
    edges = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    mids = (x[:-1] + x[1:]) / 2.0
    lower = np.where(starts == 0, -np.inf, mids[np.maximum(starts - 1, 0)])
    upper = np.where(stops == len(x) - 1, np.inf, mids[np.minimum(stops, len(mids) - 1)])
    return lower, upper


class CatalogModel(EntropyModel):
    """One-dimensional model with a closed-form density per n"""

    supports_capacity = True
    breakpoints: Tuple[float, ...] = ()

    def __init__(self, space: GridSpace, model_id: str, params: dict,
                 n_ladder: Sequence[int] = DEFAULT_N_LADDER, tail_window: int = DEFAULT_TAIL_WINDOW):
        if space.dim != 1:
            raise ModelError(f"Catalog model '{model_id}' is one-dimensional (got dim={space.dim})")
        super().__init__(space, model_id, n_ladder, tail_window)
        self.params = dict(params)
        self._check_normalization()

    @abstractmethod
    def log_piece_integrals(self, pieces: Tuple[np.ndarray, ...], n: int) -> np.ndarray:
        """log of the integral of e^{n f} h_n over every linear piece"""

    @abstractmethod
    def log_interval_probabilities(self, lower: np.ndarray, upper: np.ndarray, n: int) -> np.ndarray:
        """log mu_n((a, b]) per interval"""

    def log_expectation(self, f: GridFunction, n: int) -> float:
        self.space.require_same(f.space)
        if f.is_neg_inf:
            return -math.inf
        logs = self.log_piece_integrals(linear_pieces(f, self.breakpoints), n)
        if np.any(logs == np.inf):
            return math.inf
        return float(logsumexp(logs))

    def log_capacity(self, points: PointSet, n: int) -> float:
        points = np.asarray(points, dtype=bool)
        if not points.any():
            return -math.inf
        lower, upper = cell_intervals(self.space, points)
        value = float(logsumexp(self.log_interval_probabilities(lower, upper, n)))
        return min(value, 0.0)

    def _check_normalization(self):
        zero = GridFunction.constant(self.space, 0.0)
        everything = full_set(self.space)
        for n in self.n_ladder:
            mass = self.log_expectation(zero, n)
            cells = float(logsumexp(self.log_interval_probabilities(*cell_intervals(self.space, everything), n)))
            if not (abs(mass) <= NORMALIZATION_TOLERANCE and abs(cells) <= NORMALIZATION_TOLERANCE):
                raise NumericFailure3(f"Density of '{self.model_id}' does not integrate to 1 at n={n}",
                                      {"log_mass": mass, "log_cell_mass": cells})


class LaplaceModel(CatalogModel):
    """X_n with density (n/2) e^{-n|x|}"""

    breakpoints = (0.0,)

    def log_piece_integrals(self, pieces, n):
        u, v, x0, f0, s = pieces
        sigma = np.where(u >= 0, 1.0, -1.0)
        return (math.log(n / 2.0) + n * (f0 - sigma * x0)
                + log_int_exp(n * (s - sigma), u - x0, v - x0))

    def log_interval_probabilities(self, lower, upper, n):
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        with np.errstate(all='ignore'):
            width_term = np.log(-np.expm1(-n * (upper - lower)))
            right = LOG_HALF - n * lower + width_term
            left = LOG_HALF + n * upper + width_term
            middle = np.log1p(-0.5 * (np.exp(n * lower) + np.exp(-n * upper)))
        return np.where(lower >= 0, right, np.where(upper <= 0, left, middle))

    def analytic_entropy(self, family_kind, parameter, member=None):
        if family_kind == "linear" and len(parameter) == 1:
            return ExtendedValue.finite(0.0) if abs(parameter[0]) < 1 else POS_INF
        if family_kind == "inverted-v":
            return ExtendedValue.finite(0.0)
        return None


class GaussianModel(CatalogModel):
    """X_n normal with mean m and variance 1/n"""

    def __init__(self, space: GridSpace, mean: float = 0.0, **kwargs):
        self.mean = float(mean)
        model_id = "gaussian" if self.mean == 0 else f"gaussian({self.mean:+g})"
        super().__init__(space, model_id, {"mean": self.mean}, **kwargs)

    def log_piece_integrals(self, pieces, n):
        u, v, x0, f0, s = pieces
        m = self.mean
        root = math.sqrt(n)
        return n * (f0 - s * x0 + s * m + s * s / 2.0) + log_ndtr_diff(root * (u - m - s), root * (v - m - s))

    def log_interval_probabilities(self, lower, upper, n):
        root = math.sqrt(n)
        return log_ndtr_diff(root * (np.asarray(lower) - self.mean), root * (np.asarray(upper) - self.mean))

    def analytic_entropy(self, family_kind, parameter, member=None):
        m = self.mean
        if family_kind == "linear" and len(parameter) == 1:
            y = parameter[0]
            return ExtendedValue.finite(m * y + y * y / 2.0)
        if family_kind == "inverted-v":
            a = parameter[0]
            candidates = [a] + [x for x in (m - 2.0,) if x >= a] + [x for x in (m + 2.0,) if x <= a]
            return ExtendedValue.finite(max(abs(a) - 2.0 * abs(x - a) - (x - m) ** 2 / 2.0 for x in candidates))
        return None


class RobustModel(EntropyModel):
    """Sublinear expectation: the maximum over finitely many component models"""

    supports_capacity = True

    def __init__(self, components: Sequence[EntropyModel], model_id: Optional[str] = None,
                 n_ladder: Optional[Sequence[int]] = None, tail_window: Optional[int] = None):
        if len(components) < 2:
            raise ModelError("A robust model needs at least two components")
        space = components[0].space
        for component in components[1:]:
            space.require_same(component.space)
        model_id = model_id or "robust:" + ",".join(c.model_id for c in components)
        super().__init__(space, model_id, n_ladder or components[0].n_ladder,
                         tail_window or components[0].tail_window)
        self.components = list(components)

    def log_expectation(self, f: GridFunction, n: int) -> float:
        return max(c.log_expectation(f, n) for c in self.components)

    def log_capacity(self, points: PointSet, n: int) -> float:
        return max(c.log_capacity(points, n) for c in self.components)

    def analytic_entropy(self, family_kind, parameter, member=None):
        values = [c.analytic_entropy(family_kind, parameter, member) for c in self.components]
        if any(v is None for v in values):
            return None
        return max(values)


class LatticeModel(EntropyModel):
    """Discrete model on the grid points with P_n(x) proportional to e^{n j(x)}"""

    supports_capacity = True

    def __init__(self, j: GridFunction, model_id: str = "lattice",
                 n_ladder: Sequence[int] = DEFAULT_N_LADDER, tail_window: int = DEFAULT_TAIL_WINDOW):
        if j.max_value() != ExtendedValue.finite(0.0):
            raise ModelError("Lattice log-density must attain 0 as its maximum")
        super().__init__(j.space, model_id, n_ladder, tail_window)
        self.j = j

    def _log_weights(self, n: int) -> np.ndarray:
        raw = n * self.j.as_array()
        return raw - logsumexp(raw)

    def log_expectation(self, f: GridFunction, n: int) -> float:
        self.space.require_same(f.space)
        return float(logsumexp(n * f.as_array() + self._log_weights(n)))

    def log_capacity(self, points: PointSet, n: int) -> float:
        points = np.asarray(points, dtype=bool)
        if not points.any():
            return -math.inf
        return min(float(logsumexp(self._log_weights(n)[points])), 0.0)

    def analytic_entropy(self, family_kind, parameter, member=None):
        if member is None:
            return None
        return ExtendedValue.from_float(float(np.max(member.as_array() + self.j.as_array())))


# ----- factories -----

def default_space(kind: str) -> GridSpace:
    lower, upper, points = DEFAULT_BOXES[kind]
    return GridSpace.line(lower, upper, points)


def laplace_model(box: Optional[GridSpace] = None, **kwargs) -> LaplaceModel:
    box = box or default_space("laplace")
    if not box.contains_box((-3.0,), (3.0,)):
        raise ModelError("Laplace model needs a box containing [-3, 3]",
                         {"lower": list(box.lower), "upper": list(box.upper)})
    return LaplaceModel(box, "laplace", {}, **kwargs)


def gaussian_model(box: Optional[GridSpace] = None, mean: float = 0.0, **kwargs) -> GaussianModel:
    box = box or default_space("gaussian")
    if box.dim == 1 and not box.contains_box((-4.0,), (4.0,)):
        logger.warning(f"Gaussian model box {box.lower}..{box.upper} does not contain [-4, 4]")
    return GaussianModel(box, mean=mean, **kwargs)


def robust_model(components: Sequence[EntropyModel], **kwargs) -> RobustModel:
    return RobustModel(components, **kwargs)


def lattice_model(j: GridFunction, **kwargs) -> LatticeModel:
    return LatticeModel(j, **kwargs)


_GAUSSIAN_ID = re.compile(r"^gaussian(?:\(\s*([+-]?\d+(?:\.\d+)?)\s*\))?$")


def _component(component_id: str, space: GridSpace, **kwargs) -> EntropyModel:
    component_id = component_id.strip()
    if component_id == "laplace":
        return laplace_model(space, **kwargs)
    match = _GAUSSIAN_ID.match(component_id)
    if match:
        return gaussian_model(space, float(match.group(1) or 0.0), **kwargs)
    raise ModelError(f"Unknown catalog model '{component_id}'")


def model_from_id(model_id: str, space: Optional[GridSpace] = None,
                  n_ladder: Sequence[int] = DEFAULT_N_LADDER,
                  tail_window: int = DEFAULT_TAIL_WINDOW) -> EntropyModel:
    """Catalog lookup: laplace, gaussian, gaussian(m), robust:<id>,<id>,..., lattice:<csv>"""
    kwargs = {"n_ladder": n_ladder, "tail_window": tail_window}
    model_id = model_id.strip()
    if model_id.startswith("robust:"):
        space = space or default_space("robust")
        parts: List[str] = [p for p in model_id[len("robust:"):].split(",") if p.strip()]
        return robust_model([_component(p, space, **kwargs) for p in parts], **kwargs)
    if model_id.startswith("lattice:"):
        from ldlab.services.storage import read_grid_function
        return lattice_model(read_grid_function(model_id[len("lattice:"):]), **kwargs)
    if model_id == "laplace":
        return laplace_model(space, **kwargs)
    if _GAUSSIAN_ID.match(model_id):
        return _component(model_id, space or default_space("gaussian"), **kwargs)
    raise ModelError(f"Unknown catalog model '{model_id}'",
                     {"known": ["laplace", "gaussian", "gaussian(m)", "robust:<ids>", "lattice:<csv>"]})
