"""
Tests for concentrations, weak maxitivity and tightness
"""
import math

import numpy as np
import pytest

from ldlab.error_handlers import ConcentrationError
from ldlab.services.concentration import (
    Concentration,
    ConcentrationKind,
    MaxPlusDensity,
    capacity_limit_concentration,
    check_tightness,
    check_weak_maxitivity,
    entropy_concentration,
    maxplus_concentration,
    trimmed_box,
)
from ldlab.services.entropy import EntropyModel
from ldlab.services.extgrid import NEG_INF, ZERO, ExtendedValue, box_set, full_set


def counting_concentration(space):
    """J(A) = 0 for two or more points, -1 for a single point"""
    def evaluator(points):
        return ZERO if points.sum() >= 2 else ExtendedValue.finite(-1.0)
    return Concentration(space, evaluator, description="counting")


class TestMaxPlusConcentration:
    """J(A) = max over A of the density"""

    def test_whole_space(self, three_points, maxplus_j):
        """j = (0, -1, -2) and A = E gives 0"""
        assert maxplus_j.eval(full_set(three_points)) == ZERO

    def test_subset(self, maxplus_j):
        """A = {x2, x3} gives -1"""
        assert maxplus_j.eval(np.array([False, True, True])) == ExtendedValue.finite(-1.0)

    def test_empty_set(self, maxplus_j):
        assert maxplus_j.eval(np.zeros(3, dtype=bool)) == NEG_INF

    def test_density_must_attain_zero(self, three_points):
        with pytest.raises(ConcentrationError):
            MaxPlusDensity.from_values(three_points, [-0.5, -1.0, -2.0])

    def test_metadata(self, maxplus_j):
        assert maxplus_j.maxitive
        assert maxplus_j.kind == ConcentrationKind.MAXPLUS

    def test_wrong_length(self, maxplus_j):
        with pytest.raises(ConcentrationError):
            maxplus_j.eval(np.ones(4, dtype=bool))


class TestConcentrationValues:
    """Evaluator results are checked against [-inf, 0]"""

    def test_positive_value_rejected(self, three_points):
        J = Concentration(three_points, lambda points: 1.0)
        with pytest.raises(ConcentrationError):
            J.eval(full_set(three_points))

    def test_floats_are_promoted(self, three_points):
        J = Concentration(three_points, lambda points: -0.25)
        assert J.eval(full_set(three_points)) == ExtendedValue.finite(-0.25)

    def test_results_are_cached(self, three_points):
        calls = []

        def evaluator(points):
            calls.append(1)
            return ZERO

        J = Concentration(three_points, evaluator)
        everything = full_set(three_points)
        J.eval(everything)
        J.eval(everything.copy())
        assert len(calls) == 1


class TestWeakMaxitivity:
    """J(C) <= max J(O_i) for closed C covered by open O_i"""

    def test_maxitive_density_passes(self, maxplus_j):
        """Maxitive concentrations are weakly maxitive"""
        report = check_weak_maxitivity(maxplus_j, cover_trials=20)
        assert report.passed
        assert report.worst_violation == 0.0

    def test_counting_concentration_fails(self, three_points):
        """A 2-point set covered by singletons violates the inequality by 1"""
        report = check_weak_maxitivity(counting_concentration(three_points), cover_trials=5)
        assert not report.passed
        assert report.worst_violation == pytest.approx(1.0)
        assert report.witness["J_closed"] == 0.0
        assert report.witness["max_J_cover"] == -1.0

    def test_laplace_capacity_passes(self, laplace):
        report = check_weak_maxitivity(capacity_limit_concentration(laplace), cover_trials=5)
        assert report.passed

    def test_cover_trials_must_be_positive(self, maxplus_j):
        with pytest.raises(ConcentrationError):
            check_weak_maxitivity(maxplus_j, cover_trials=0)


class TestTightness:
    """Nested sub-boxes K with J(K^c) < -level"""

    def test_laplace_is_tight(self, laplace):
        report = check_tightness(capacity_limit_concentration(laplace), levels=(1.0, 2.0))
        assert report.passed
        for entry in report.witness["levels"]:
            assert entry["found"]
            assert entry["J_complement"] < -entry["level"]

    def test_laplace_box_grows_with_level(self, laplace):
        """J(K^c) is about -(edge of K), so level 2 needs a wider box than level 1"""
        levels = check_tightness(capacity_limit_concentration(laplace), levels=(1.0, 2.0)).witness["levels"]
        assert levels[1]["K_upper"][0] > levels[0]["K_upper"][0]
        assert levels[1]["K_upper"][0] == pytest.approx(2.0, abs=0.02)

    def test_gaussian_is_tight(self, gaussian):
        report = check_tightness(capacity_limit_concentration(gaussian), levels=(1.0, 2.0))
        assert report.passed

    def test_flat_density_is_not_tight(self, three_points):
        """j = 0 everywhere keeps J(K^c) = 0"""
        J = maxplus_concentration(three_points, [0.0, 0.0, 0.0])
        report = check_tightness(J, levels=(1.0,))
        assert not report.passed
        assert report.witness["levels"][0]["found"] is False

    def test_levels_required(self, maxplus_j):
        with pytest.raises(ConcentrationError):
            check_tightness(maxplus_j, levels=())

    def test_trimmed_box(self, plane):
        assert trimmed_box(plane, 1).sum() == 9
        assert trimmed_box(plane, 2).sum() == 1
        assert trimmed_box(plane, 3).sum() == 0


class TestCapacityLimit:
    """Tail-window limits of (1/n) log mu_n(A)"""

    def test_laplace_interval(self, laplace):
        """A = [1, 2] gives about -1 in both modes"""
        A = box_set(laplace.space, (1.0,), (2.0,))
        upper = capacity_limit_concentration(laplace, "upper").eval(A).to_float()
        lower = capacity_limit_concentration(laplace, "lower").eval(A).to_float()
        assert upper == pytest.approx(-1.0, abs=1e-2)
        assert lower == pytest.approx(-1.0, abs=1e-2)
        assert lower <= upper

    def test_whole_box(self, laplace):
        J = capacity_limit_concentration(laplace)
        assert J.eval(full_set(laplace.space)).to_float() == pytest.approx(0.0, abs=1e-9)

    def test_empty_set(self, laplace):
        assert capacity_limit_concentration(laplace).eval(np.zeros(laplace.space.size, dtype=bool)) == NEG_INF

    def test_unknown_mode(self, laplace):
        with pytest.raises(ConcentrationError):
            capacity_limit_concentration(laplace, "middle")

    def test_model_without_capacity(self, three_points):
        class ExpectationOnly(EntropyModel):
            def log_expectation(self, f, n):
                return 0.0

        with pytest.raises(ConcentrationError):
            capacity_limit_concentration(ExpectationOnly(three_points, "expectation-only"))

    def test_entropy_path_agrees(self, laplace):
        """The entropy of -inf 1_{A^c} integrates the same cells as the capacity"""
        A = box_set(laplace.space, (1.0,), (2.0,))
        through_entropy = entropy_concentration(laplace).eval(A).to_float()
        through_capacity = capacity_limit_concentration(laplace).eval(A).to_float()
        assert math.isclose(through_entropy, through_capacity, abs_tol=1e-8)
