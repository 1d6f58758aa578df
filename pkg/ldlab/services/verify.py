"""
LDP / LP verification: sandwich bounds on point-sets, the Laplace-principle
equality on functions, the LDP => LP implication and the full pipeline
(tightness, conjugate, exposed points, richness, bounds).
"""
from __future__ import annotations

import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ldlab.error_handlers import ConcentrationError, FamilyError
from ldlab.models import (
    DEFAULT_TOLERANCE,
    PROXY_DISCLOSURE,
    CheckReport,
    FunctionRecord,
    LdpReport,
    LdpSummary,
    RunConfig,
    SetRecord,
)
from ldlab.services.concentration import _excess, capacity_limit_concentration, check_tightness
from ldlab.services.conjugate import (
    FamilyKind,
    TestingFamily,
    check_richness,
    conjugate_rate,
    detect_exposed,
    family_entropies,
)
from ldlab.services.cvxint import RateField, minimal_rate
from ldlab.services.entropy import EntropyModel, asymptotic_entropy, growth_membership
from ldlab.services.extgrid import (
    GridFunction,
    GridSpace,
    PointSet,
    box_set,
    dilate,
    erode,
    lattice_ball,
)
from ldlab.services.metrics import timed_operation

logger = logging.getLogger(__name__)

LabelledSet = Tuple[str, PointSet]
LabelledFunction = Tuple[str, GridFunction]

COARSE_POINTS = {1: 11, 2: 5}
BATTERY_SLOPES = (-0.5, -0.25, 0.0, 0.25, 0.5)
BATTERY_PEAKS = (-2.0, -1.0, 0.0, 1.0, 2.0)


# ----- batteries -----

def _coarse_axis(axis: np.ndarray, count: int) -> np.ndarray:
    """Roughly evenly spaced grid values along one axis, endpoints included"""
    idx = np.unique(np.round(np.linspace(0, len(axis) - 1, min(count, len(axis)))).astype(int))
    return axis[idx]


def _fmt(values) -> str:
    return ",".join(f"{v:g}" for v in np.atleast_1d(values))


def default_set_battery(space: GridSpace) -> List[LabelledSet]:
    """Boxes with corners on a coarse sub-grid plus complements of balls around coarse points"""
    count = COARSE_POINTS.get(space.dim, 3)
    coarse = [_coarse_axis(axis, count) for axis in space.axes]
    per_axis = [list(itertools.combinations(c, 2)) for c in coarse]
    battery: List[LabelledSet] = []
    for sides in itertools.product(*per_axis):
        lower = [a for a, _ in sides]
        upper = [b for _, b in sides]
        battery.append((f"box[{_fmt(lower)}]-[{_fmt(upper)}]", box_set(space, lower, upper)))
    radius = 0.1 * min(hi - lo for lo, hi in zip(space.lower, space.upper))
    for center in itertools.product(*coarse):
        ball = lattice_ball(space, center, radius)
        if (~ball).any():
            battery.append((f"complement ball({_fmt(center)};{radius:g})", ~ball))
    logger.debug(f"Set battery with {len(battery)} members on {space.shape}")
    return battery


def _central_indices(space: GridSpace) -> np.ndarray:
    centre = (np.asarray(space.lower) + np.asarray(space.upper)) / 2.0
    half = (np.asarray(space.upper) - np.asarray(space.lower)) / 4.0
    inside = np.all(np.abs(space.points - centre) <= half + 1e-9, axis=1)
    return np.flatnonzero(inside)


def default_function_battery(space: GridSpace, seed: int = 0, tents: int = 10) -> List[LabelledFunction]:
    """Linear members with |y| <= 0.5, inverted-v members and random tents c - k|x - b|.

    Tent peaks b are grid points, so the piecewise-linear extension is exact.
    """
    rng = np.random.default_rng(seed)
    pts = space.points
    battery: List[LabelledFunction] = []
    for axis in range(space.dim):
        for y in BATTERY_SLOPES:
            if y == 0.0 and axis > 0:
                continue
            label = f"linear({y:g})" if space.dim == 1 else f"linear(axis={axis + 1},{y:g})"
            battery.append((label, GridFunction.from_array(space, y * pts[:, axis])))
    if space.dim == 1:
        x = pts[:, 0]
        for a in BATTERY_PEAKS:
            if space.lower[0] <= a <= space.upper[0]:
                battery.append((f"invv({a:g})", GridFunction.from_array(space, abs(a) - 2.0 * np.abs(x - a))))
    central = _central_indices(space)
    for i in range(tents):
        b = pts[int(rng.choice(central))]
        k = float(rng.uniform(1.5, 3.0))
        c = float(rng.uniform(-0.5, 0.5))
        values = c - k * np.linalg.norm(pts - b, axis=1)
        battery.append((f"tent({i}:c={c:.3f},k={k:.3f},b={_fmt(b)})", GridFunction.from_array(space, values)))
    return battery


def _labelled_sets(space: GridSpace, sets) -> List[LabelledSet]:
    out = []
    for i, item in enumerate(sets):
        if isinstance(item, tuple):
            out.append((item[0], np.asarray(item[1], dtype=bool)))
        else:
            out.append((f"set[{i}]", np.asarray(item, dtype=bool)))
    for _, points in out:
        if points.shape != (space.size,):
            raise ConcentrationError(f"Point-set must have length {space.size}")
    return out


def _labelled_functions(functions) -> List[LabelledFunction]:
    return [item if isinstance(item, tuple) else (f"f[{i}]", item) for i, item in enumerate(functions)]


def _close(a: float, b: float, tolerance: float) -> bool:
    if math.isfinite(a) and math.isfinite(b):
        return abs(a - b) <= tolerance
    return a == b


# ----- LDP / LP -----

@timed_operation("verify", "verify_ldp")
def verify_ldp(model: EntropyModel, rate: RateField, sets: Sequence[Union[PointSet, LabelledSet]],
               tolerance: float = DEFAULT_TOLERANCE,
               exposed_mask: Optional[np.ndarray] = None) -> LdpReport:
    """-inf_{int A} I <= J_lower(A) + tol and J_upper(A) <= -inf_{cl A} I + tol for every A.

    With exposed_mask the lower bound only uses int A intersected with the exposed points.
    """
    if not model.supports_capacity:
        raise ConcentrationError(f"Model '{model.model_id}' has no capacity evaluator")
    if not sets:
        raise ConcentrationError("At least one point-set is required")
    space = model.space
    space.require_same(rate.space)
    J_lower = capacity_limit_concentration(model, "lower")
    J_upper = capacity_limit_concentration(model, "upper")
    records = []
    for descriptor, points in _labelled_sets(space, sets):
        interior = erode(space, points)
        if exposed_mask is not None:
            interior = interior & exposed_mask
        lower_bound = -rate.inf_over(interior)
        upper_bound = -rate.inf_over(dilate(space, points))
        j_low = J_lower.eval(points).to_float()
        j_up = J_upper.eval(points).to_float()
        passed = (_excess(lower_bound, j_low + tolerance) == 0.0
                  and _excess(j_up, upper_bound + tolerance) == 0.0
                  and _excess(j_low, j_up + tolerance) == 0.0)
        logger.debug(f"{descriptor}: {lower_bound} <= {j_low} <= {j_up} <= {upper_bound} ({passed})")
        records.append(SetRecord(descriptor=descriptor, lower_bound=lower_bound, J_lower=j_low,
                                 J_upper=j_up, upper_bound=upper_bound, passed=passed))
    ldp_pass = all(r.passed for r in records)
    logger.info(f"LDP bounds on {len(records)} sets for {model.model_id}: {'pass' if ldp_pass else 'fail'}")
    return LdpReport(summary=LdpSummary(ldp_pass=ldp_pass, lp_pass=False, tolerance=tolerance), sets=records,
                     provenance=_provenance(model))


@timed_operation("verify", "verify_lp")
def verify_lp(model: EntropyModel, rate: RateField, functions: Sequence[Union[GridFunction, LabelledFunction]],
              tolerance: float = DEFAULT_TOLERANCE) -> LdpReport:
    """lower entropy = upper entropy = sup (f - I) within tolerance; functions outside the growth class are skipped"""
    model.space.require_same(rate.space)
    records = []
    for label, f in _labelled_functions(functions):
        if not growth_membership(model, f, tolerance=tolerance).in_class:
            logger.debug(f"{label} is outside the growth class; skipped")
            records.append(FunctionRecord(function_id=label, skipped=True, passed=False))
            continue
        entropy = asymptotic_entropy(model, f, tolerance, label=label)
        sup = rate.sup_of_difference(f)
        passed = (entropy.converged and _close(entropy.upper, sup, tolerance)
                  and _close(entropy.lower, sup, tolerance))
        logger.debug(f"{label}: entropy [{entropy.lower}, {entropy.upper}] vs sup(f - I) = {sup} ({passed})")
        records.append(FunctionRecord(function_id=label, entropy_lower=entropy.lower, entropy_upper=entropy.upper,
                                      sup_f_minus_rate=sup, passed=passed))
    checked = [r for r in records if not r.skipped]
    skipped = len(records) - len(checked)
    lp_pass = bool(checked) and all(r.passed for r in checked)
    if skipped:
        logger.warning(f"{skipped} functions skipped for failing the growth condition")
    logger.info(f"Laplace principle on {len(checked)} functions for {model.model_id}: {'pass' if lp_pass else 'fail'}")
    return LdpReport(summary=LdpSummary(ldp_pass=False, lp_pass=lp_pass, tolerance=tolerance,
                                        skipped_functions=skipped),
                     functions=records, provenance=_provenance(model))


def _provenance(model: EntropyModel) -> Dict[str, Any]:
    space = model.space
    return {"model": model.model_id, "n_ladder": list(model.n_ladder), "tail_window": model.tail_window,
            "grid": {"lower": list(space.lower), "upper": list(space.upper),
                     "points_per_axis": list(space.points_per_axis)}}


def check_ldp_implies_lp(model: EntropyModel, rate: RateField,
                         sets: Optional[Sequence[Union[PointSet, LabelledSet]]] = None,
                         functions: Optional[Sequence[Union[GridFunction, LabelledFunction]]] = None,
                         tolerance: float = DEFAULT_TOLERANCE, seed: int = 0) -> CheckReport:
    """Whenever the LDP bounds pass, the Laplace principle must pass at twice the tolerance"""
    sets = sets if sets is not None else default_set_battery(model.space)
    functions = functions if functions is not None else default_function_battery(model.space, seed)
    ldp = verify_ldp(model, rate, sets, tolerance)
    lp = verify_lp(model, rate, functions, 2.0 * tolerance)
    holds = lp.summary.lp_pass or not ldp.summary.ldp_pass
    details = {"ldp_pass": ldp.summary.ldp_pass, "lp_pass": lp.summary.lp_pass,
               "vacuous": not ldp.summary.ldp_pass, "lp_tolerance": 2.0 * tolerance}
    if not holds:
        failing = [r.function_id for r in lp.functions if not r.passed and not r.skipped]
        details["message"] = "LDP passed but LP failed: this indicates an implementation bug"
        logger.error(f"LDP => LP implication failed for {model.model_id} on {failing}")
        return CheckReport(check="ldp_implies_lp", passed=False, worst_violation=math.inf,
                           witness={"failing_functions": failing}, details=details, proxy=PROXY_DISCLOSURE)
    return CheckReport(check="ldp_implies_lp", passed=True, details=details, proxy=PROXY_DISCLOSURE)


# ----- finite-dimensional sufficient conditions -----

def finite_dimension_conditions(model: EntropyModel, H: TestingFamily, tolerance: float = DEFAULT_TOLERANCE,
                                source: str = "auto", entropies=None) -> CheckReport:
    """Over the linear family: (a) lower = upper entropy, (b) 0 interior to the finiteness
    domain, (c) lower semicontinuity along every parameter axis"""
    if H.kind != FamilyKind.LINEAR:
        raise FamilyError("Finite-dimension conditions need the linear family")
    entropies = list(entropies) if entropies is not None else family_entropies(model, H, source, tolerance)
    params = [tuple(p) for p in H.parameters]
    upper = {p: r.upper for p, r in zip(params, entropies)}

    not_converged = [H.describe(i) for i, r in enumerate(entropies) if not r.converged]
    cond_a = not not_converged

    origin = tuple(0.0 for _ in params[0])
    P = H.parameters
    distances = np.linalg.norm(P - np.asarray(origin), axis=1)
    cond_b = origin in upper and math.isfinite(upper[origin])
    if cond_b and len(P) > 1:
        nearest = np.min(distances[distances > 0])
        neighbours = distances <= nearest * (1 + 1e-9)
        cond_b = all(math.isfinite(upper[params[i]]) for i in np.flatnonzero(neighbours))

    steps = []
    for k in range(P.shape[1]):
        values = np.unique(P[:, k])
        steps.append(float(np.min(np.diff(values))) if len(values) > 1 else 0.0)

    def neighbour(p, axis, offset):
        q = list(p)
        q[axis] = round(q[axis] + offset * steps[axis], 12)
        for key in upper:
            if all(abs(a - b) <= 1e-9 for a, b in zip(key, q)):
                return upper[key]
        return None

    worst_lsc, lsc_witness = 0.0, None
    for p in params:
        for axis in range(len(p)):
            if steps[axis] == 0.0:
                continue
            for direction in (-1, 1):
                near, far = neighbour(p, axis, direction), neighbour(p, axis, 2 * direction)
                if near is None or not math.isfinite(near):
                    continue
                limit = 2 * near - far if far is not None and math.isfinite(far) else near
                excess = _excess(upper[p], limit)
                if excess > worst_lsc:
                    worst_lsc, lsc_witness = excess, {"parameter": list(p), "axis": axis + 1,
                                                      "value": upper[p], "limit_estimate": limit}
    cond_c = worst_lsc <= tolerance
    passed = cond_a and cond_b and cond_c
    logger.info(f"Finite-dimension conditions for {H.label}: a={cond_a} b={cond_b} c={cond_c}")
    return CheckReport(check="finite_dimension", passed=passed, worst_violation=worst_lsc,
                       witness={"not_converged": not_converged[:10], "lsc": lsc_witness},
                       details={"a_entropy_converges": cond_a, "b_origin_interior": cond_b,
                                "c_lower_semicontinuous": cond_c, "essential_smoothness": "not checked"},
                       proxy=PROXY_DISCLOSURE)


# ----- pipeline -----

def check_rate_identification(model: EntropyModel, rate: RateField, points: PointSet,
                              tolerance: float) -> CheckReport:
    """Minimal rates of the lower and upper concentrations against the conjugate at the given points"""
    points = np.asarray(points, dtype=bool)
    if not points.any():
        return CheckReport(check="rate_identification", passed=False, worst_violation=math.inf,
                           details={"points": 0, "reason": "no nice exposed points"})
    lower = minimal_rate(capacity_limit_concentration(model, "lower"), points=points)
    upper = minimal_rate(capacity_limit_concentration(model, "upper"), points=points)
    gaps = []
    for field in (lower, upper):
        diff = np.abs(field.values[points] - rate.values[points])
        diff = np.where(field.values[points] == rate.values[points], 0.0, diff)
        gaps.append(diff)
    worst = np.maximum(gaps[0], gaps[1])
    at = int(np.argmax(worst))
    x = model.space.points[points][at]
    passed = float(worst[at]) <= tolerance
    return CheckReport(check="rate_identification", passed=passed, worst_violation=float(worst[at]),
                       witness={"point": x.tolist(), "minimal_rate_lower": float(lower.values[points][at]),
                                "minimal_rate_upper": float(upper.values[points][at]),
                                "conjugate": float(rate.values[points][at])},
                       details={"points": int(points.sum()), "tolerance": tolerance}, proxy=PROXY_DISCLOSURE)


def _step(report: CheckReport) -> Dict[str, Any]:
    return report.model_dump(mode="json", by_alias=True)


@timed_operation("verify", "gartner_ellis_pipeline")
def gartner_ellis_pipeline(model: EntropyModel, H: TestingFamily, config: Optional[RunConfig] = None,
                           sets: Optional[Sequence[Union[PointSet, LabelledSet]]] = None,
                           functions: Optional[Sequence[Union[GridFunction, LabelledFunction]]] = None
                           ) -> Tuple[LdpReport, RateField, Any]:
    """Tightness, conjugate, exposed points and richness, then the LDP/LP bounds.

    If tightness and richness pass the full LDP and LP are verified with the conjugate
    as rate, together with the identification of the rate at nice exposed points.
    Otherwise only the upper bound on closed sets and the lower bound restricted to
    exposed points are reported and the result is marked not certified.
    Returns (report, conjugate rate, exposed set).
    """
    config = config or RunConfig(model=model.model_id)
    space = model.space
    sets = sets if sets is not None else default_set_battery(space)
    functions = functions if functions is not None else default_function_battery(space, config.seed)
    steps: Dict[str, Any] = {}

    tightness = check_tightness(capacity_limit_concentration(model, "upper"), config.tightness_levels)
    steps["tightness"] = _step(tightness)

    entropies = family_entropies(model, H, config.entropy_source, config.tolerance)
    rate = conjugate_rate(model, H, config.entropy_source, config.tolerance, entropies)
    steps["conjugate"] = dict(rate.diagnostics)

    exposed = detect_exposed(model, H, rate, config.margin, config.radius, config.entropy_source,
                             config.tolerance, entropies)
    steps["exposed"] = {"count": exposed.count, "nice": int(exposed.nice.sum()), "label": exposed.label,
                        **exposed.diagnostics}

    richness = check_richness(rate, exposed, config.ball_radii, config.tolerance)
    steps["richness"] = _step(richness)

    if config.check_finite_dimension and H.kind == FamilyKind.LINEAR:
        steps["finite_dimension"] = _step(finite_dimension_conditions(model, H, config.tolerance,
                                                                      config.entropy_source, entropies))

    if tightness.passed and richness.passed:
        ldp = verify_ldp(model, rate, sets, config.tolerance)
        lp = verify_lp(model, rate, functions, config.tolerance)
        identification = check_rate_identification(model, rate, exposed.nice, config.rate_tolerance)
        steps["rate_identification"] = _step(identification)
        certified = ldp.summary.ldp_pass and lp.summary.lp_pass and identification.passed
        summary = LdpSummary(ldp_pass=ldp.summary.ldp_pass, lp_pass=lp.summary.lp_pass,
                             tolerance=config.tolerance, certified=certified,
                             skipped_functions=lp.summary.skipped_functions)
        report = LdpReport(summary=summary, sets=ldp.sets, functions=lp.functions, steps=steps,
                           provenance=config.provenance())
    else:
        logger.warning("Tightness or richness failed: reporting one-sided bounds, LDP not certified")
        one_sided = verify_ldp(model, rate, sets, config.tolerance, exposed_mask=exposed.mask)
        steps["one_sided_bounds"] = {"pass": one_sided.summary.ldp_pass,
                                     "lower_bound_domain": "interior intersected with exposed points"}
        summary = LdpSummary(ldp_pass=False, lp_pass=False, tolerance=config.tolerance, certified=False)
        report = LdpReport(summary=summary, sets=one_sided.sets, steps=steps, provenance=config.provenance())
        certified = False

    logger.info(f"Pipeline for {model.model_id} with {H.label}: {'certified' if certified else 'not certified'}")
    return report, rate, exposed
