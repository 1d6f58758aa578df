"""
Entropies (1/n) log E_n(e^{nf}) of a sequence of (sublinear) expectations, their
tail-window asymptotics, growth classes and the numeric representation checks.
"""
from __future__ import annotations

import copy
import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from ldlab.error_handlers import ConcentrationError, NumericFailure3, PreconditionError
from ldlab.models import (
    DEFAULT_EXACT_TOLERANCE,
    DEFAULT_N_LADDER,
    DEFAULT_TAIL_WINDOW,
    DEFAULT_TOLERANCE,
    PROXY_DISCLOSURE,
    CheckReport,
    EntropyRecord,
    GrowthRecord,
)
from ldlab.services.concentration import capacity_limit_concentration
from ldlab.services.cvxint import convex_integral
from ldlab.services.extgrid import (
    NEG_INF,
    POS_INF,
    ExtendedValue,
    GridFunction,
    GridSpace,
    PointSet,
    Regularity,
    mask,
)
from ldlab.services.metrics import timed_operation

logger = logging.getLogger(__name__)

GROWTH_FACTORS = (1.5, 1.1)
DEFAULT_M_LADDER = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
TAIL_LEMMA_FLOOR = -10.0


class EntropyModel(ABC):
    """Sequence of expectations E_n on a grid space, indexed by an n-ladder"""

    supports_capacity = False

    def __init__(self, space: GridSpace, model_id: str,
                 n_ladder: Sequence[int] = DEFAULT_N_LADDER,
                 tail_window: int = DEFAULT_TAIL_WINDOW):
        n_ladder = tuple(int(n) for n in n_ladder)
        if not n_ladder or any(n < 1 for n in n_ladder) or any(b <= a for a, b in zip(n_ladder, n_ladder[1:])):
            raise PreconditionError(f"n_ladder must be a strictly increasing sequence of positive integers (got {n_ladder})")
        if not 1 <= tail_window <= len(n_ladder):
            raise PreconditionError(f"tail_window must lie in 1..{len(n_ladder)} (got {tail_window})")
        self.space = space
        self.model_id = model_id
        self.n_ladder = n_ladder
        self.tail_window = tail_window

    @property
    def tail_ladder(self) -> Tuple[int, ...]:
        return self.n_ladder[-self.tail_window:]

    def with_ladder(self, n_ladder: Sequence[int], tail_window: int) -> "EntropyModel":
        clone = copy.copy(self)
        EntropyModel.__init__(clone, self.space, self.model_id, n_ladder, tail_window)
        return clone

    @abstractmethod
    def log_expectation(self, f: GridFunction, n: int) -> float:
        """log E_n(e^{n f}); +inf when the integral diverges"""

    def log_capacity(self, points: PointSet, n: int) -> float:
        """log mu_n(A)"""
        raise ConcentrationError(f"Model '{self.model_id}' has no capacity evaluator")

    def analytic_entropy(self, family_kind: str, parameter: Tuple[float, ...],
                         member: Optional[GridFunction] = None) -> Optional[ExtendedValue]:
        """Closed-form asymptotic entropy of a family member, when known"""
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.model_id!r}, n_ladder={self.n_ladder}, tail_window={self.tail_window})"


def entropy_at(model: EntropyModel, f: GridFunction, n: int) -> ExtendedValue:
    """(1/n) log E_n(e^{nf}), shifted by max f before integration"""
    model.space.require_same(f.space)
    if n < 1:
        raise PreconditionError(f"n must be a positive integer (got {n})")
    if f.is_neg_inf:
        return NEG_INF
    top = float(np.max(f.values[f.support]))
    log_e = model.log_expectation(f.shift(-top), n)
    if math.isnan(log_e):
        raise NumericFailure3(f"Expectation of {model.model_id} returned NaN at n={n}")
    if log_e == math.inf:
        return POS_INF
    if log_e == -math.inf:
        return NEG_INF
    return ExtendedValue.finite(top + log_e / n)


def entropy_sweep(model: EntropyModel, f: GridFunction,
                  n_values: Optional[Sequence[int]] = None) -> List[Tuple[int, ExtendedValue]]:
    return [(n, entropy_at(model, f, n)) for n in (n_values or model.n_ladder)]


@timed_operation("entropy", "asymptotic_entropy")
def asymptotic_entropy(model: EntropyModel, f: GridFunction, tolerance: float = DEFAULT_TOLERANCE,
                       label: str = "") -> EntropyRecord:
    """Lower/upper asymptotic entropy as min/max over the tail window"""
    sweep = entropy_sweep(model, f)
    tail = [value for _, value in sweep[-model.tail_window:]]
    top = f.max_value()
    lower, upper = min(tail), max(tail)

    if POS_INF in tail:
        lower = upper = POS_INF
    elif top.is_finite and all(v.is_finite for v in tail) and len(tail) > 1:
        rising = all(b > a for a, b in zip(tail, tail[1:]))
        if rising and tail[-1].value > top.value + 1.0:
            logger.debug(f"Entropy of {label or 'f'} exceeds max f + 1 while rising: flagged as divergent")
            lower = upper = POS_INF

    if lower.is_finite and upper.is_finite:
        converged = upper.value - lower.value <= tolerance
    else:
        converged = lower == upper
    return EntropyRecord(label=label, lower=lower.to_float(), upper=upper.to_float(), converged=converged,
                         source="numeric", sweep=[(n, v.to_float()) for n, v in sweep])


def analytic_record(value: ExtendedValue, label: str = "") -> EntropyRecord:
    return EntropyRecord(label=label, lower=value.to_float(), upper=value.to_float(), converged=True,
                         source="analytic")


def growth_membership(model: EntropyModel, f: GridFunction, t: Optional[float] = None,
                      tolerance: float = DEFAULT_TOLERANCE) -> GrowthRecord:
    """f belongs to the growth class iff the upper entropy of t f is finite for the tested t > 1.

    Without an explicit t, 1.5 is tried first and 1.1 as the fallback.
    """
    if t is not None and t <= 1:
        raise PreconditionError(f"Growth factor t must exceed 1 (got {t})")
    factors = (t,) if t is not None else GROWTH_FACTORS
    record = None
    for factor in factors:
        upper = asymptotic_entropy(model, f.scale(factor), tolerance).upper
        record = GrowthRecord(in_class=math.isfinite(upper), witness_t=factor, upper_entropy=upper)
        if record.in_class:
            break
    return record


def check_tail_lemma(model: EntropyModel, f: GridFunction, m_ladder: Sequence[float] = DEFAULT_M_LADDER,
                     floor: float = TAIL_LEMMA_FLOOR, tolerance: float = DEFAULT_TOLERANCE) -> CheckReport:
    """Upper entropies of f on {f >= m} must eventually decrease below the floor"""
    growth = growth_membership(model, f, tolerance=tolerance)
    if not growth.in_class:
        raise PreconditionError("Tail lemma requires f in the growth class",
                                {"witness_t": growth.witness_t, "upper_entropy": growth.upper_entropy})
    values = []
    for m in m_ladder:
        truncated = mask(f, f.level_set(m))
        values.append(asymptotic_entropy(model, truncated, tolerance).upper)
    peak = int(np.argmax(values))
    tail = values[peak:]
    decreasing = all(b <= a + tolerance for a, b in zip(tail, tail[1:]))
    reaches_floor = values[-1] < floor
    passed = decreasing and reaches_floor
    logger.info(f"Tail lemma on {model.model_id}: {'pass' if passed else 'fail'}")
    return CheckReport(check="tail_lemma", passed=passed,
                       worst_violation=0.0 if passed else max(0.0, values[-1] - floor),
                       witness={"m_ladder": list(m_ladder), "upper_entropies": values},
                       details={"floor": floor, "decreasing": decreasing, "growth_t": growth.witness_t},
                       proxy=PROXY_DISCLOSURE)


@timed_operation("entropy", "check_representation")
def check_representation(model: EntropyModel, f: GridFunction,
                         tolerance: float = DEFAULT_TOLERANCE) -> CheckReport:
    """Upper asymptotic entropy of f against the convex integral of f under the upper concentration"""
    if f.regularity != Regularity.CONTINUOUS:
        raise PreconditionError(f"Representation check requires a continuous function (got {f.regularity.value})")
    growth = growth_membership(model, f, tolerance=tolerance)
    if not growth.in_class:
        raise PreconditionError("Representation check requires f in the growth class",
                                {"witness_t": growth.witness_t})
    entropy = asymptotic_entropy(model, f, tolerance)
    integral = convex_integral(capacity_limit_concentration(model, "upper"), f)
    upper = ExtendedValue.from_float(entropy.upper)
    if upper.is_finite and integral.is_finite:
        difference = abs(upper.value - integral.value)
    else:
        difference = 0.0 if upper == integral else math.inf
    passed = difference <= tolerance
    logger.info(f"Representation on {model.model_id}: entropy={upper} integral={integral} diff={difference}")
    return CheckReport(check="representation", passed=passed, worst_violation=difference,
                       witness={"entropy_upper": entropy.upper, "convex_integral": integral.to_float()},
                       details={"tolerance": tolerance, "growth_t": growth.witness_t},
                       proxy=PROXY_DISCLOSURE)


def check_largest_term(sequences: Sequence[Callable[[int], float]],
                       n_ladder: Sequence[int] = tuple(range(1, 257)), tail_window: int = 16,
                       tolerance: float = DEFAULT_TOLERANCE) -> CheckReport:
    """Principle of the largest term on log-generators n -> log a_n (with -inf for a_n = 0)"""
    if not sequences:
        raise PreconditionError("At least one sequence is required")
    tail = list(n_ladder)[-tail_window:]
    logs = np.array([[seq(n) / n for n in tail] for seq in sequences])
    total = np.array([logsumexp([seq(n) for seq in sequences]) / n for n in tail])
    limsups = logs.max(axis=1)
    liminfs = logs.min(axis=1)
    up_lhs, up_rhs = float(total.max()), float(limsups.max())
    low_lhs = float(total.min())
    low_rhs = float(max([liminfs[0]] + list(limsups[1:])))
    up_violation = max(0.0, up_lhs - up_rhs)
    low_violation = max(0.0, low_lhs - low_rhs)
    passed = up_violation <= tolerance and low_violation <= tolerance
    return CheckReport(check="largest_term", passed=passed, worst_violation=max(up_violation, low_violation),
                       witness={"limsup_sum": up_lhs, "max_limsup": up_rhs,
                                "liminf_sum": low_lhs, "liminf_bound": low_rhs},
                       details={"tail": tail, "sequences": len(sequences)}, proxy=PROXY_DISCLOSURE)


def check_monetary_axioms(model: EntropyModel, functions: Sequence[GridFunction], n: int,
                          shifts: Sequence[float] = (-1.5, 2.5),
                          tolerance: float = DEFAULT_EXACT_TOLERANCE) -> CheckReport:
    """Normalization, monotonicity and translation invariance of entropy_at at a fixed index"""
    zero = GridFunction.constant(model.space, 0.0)
    violations = {"normalization": abs(entropy_at(model, zero, n).to_float()),
                  "monotonicity": 0.0, "translation": 0.0}
    values = [entropy_at(model, f, n) for f in functions]
    for i, f in enumerate(functions):
        for g in functions:
            joined = entropy_at(model, f.maximum(g), n)
            if values[i] > joined:
                gap = values[i].to_float() - joined.to_float()
                violations["monotonicity"] = max(violations["monotonicity"], gap)
        for c in shifts:
            shifted = entropy_at(model, f.shift(c), n)
            expected = values[i] + c
            if shifted.is_finite and expected.is_finite:
                gap = abs(shifted.value - expected.value)
            else:
                gap = 0.0 if shifted == expected else math.inf
            violations["translation"] = max(violations["translation"], gap)
    worst = max(violations.values())
    return CheckReport(check="monetary_axioms", passed=worst <= tolerance, worst_violation=worst,
                       details={"violations": violations, "n": n, "functions": len(functions)})


def check_joint_maxitivity(model: EntropyModel, f: GridFunction, dominating: Sequence[GridFunction],
                           tolerance: float = DEFAULT_TOLERANCE) -> CheckReport:
    """f <= max_i g_i implies upper entropy of f <= max_i upper entropy of g_i"""
    if not dominating:
        raise PreconditionError("At least one dominating function is required")
    envelope = dominating[0]
    for g in dominating[1:]:
        envelope = envelope.maximum(g)
    if not f.le(envelope):
        raise PreconditionError("f is not dominated by the maximum of the given functions")
    lhs = asymptotic_entropy(model, f, tolerance).upper
    rhs = max(asymptotic_entropy(model, g, tolerance).upper for g in dominating)
    violation = 0.0 if lhs == -math.inf or rhs == math.inf else max(0.0, lhs - rhs)
    return CheckReport(check="joint_maxitivity", passed=violation <= tolerance, worst_violation=violation,
                       witness={"entropy_f": lhs, "max_entropy_g": rhs}, proxy=PROXY_DISCLOSURE)
