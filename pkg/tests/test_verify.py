"""
Tests for the LDP / LP verification and the end-to-end pipeline
"""
import math

import numpy as np
import pytest

from ldlab.error_handlers import ConcentrationError, FamilyError
from ldlab.models import RunConfig
from ldlab.services.conjugate import TestingFamily
from ldlab.services.cvxint import RateField
from ldlab.services.extgrid import GridFunction, box_set, full_set
from ldlab.services.verify import (
    check_ldp_implies_lp,
    check_rate_identification,
    default_function_battery,
    default_set_battery,
    finite_dimension_conditions,
    gartner_ellis_pipeline,
    verify_ldp,
    verify_lp,
)


@pytest.fixture(scope="module")
def laplace_rate(laplace):
    """I(x) = |x|"""
    return RateField.from_array(laplace.space, np.abs(laplace.space.points[:, 0]))


@pytest.fixture(scope="module")
def gaussian_rate(gaussian):
    """I(x) = x^2 / 2"""
    return RateField.from_array(gaussian.space, gaussian.space.points[:, 0] ** 2 / 2.0)


class TestBatteries:
    """Default point-sets and functions"""

    def test_set_battery_on_the_line(self, laplace):
        """55 coarse boxes and 11 ball complements"""
        battery = default_set_battery(laplace.space)
        assert len(battery) == 66
        assert sum(label.startswith("box") for label, _ in battery) == 55
        assert all(points.shape == (laplace.space.size,) for _, points in battery)

    def test_set_battery_on_the_plane(self, plane):
        battery = default_set_battery(plane)
        assert sum(label.startswith("box") for label, _ in battery) == 100
        assert sum(label.startswith("complement") for label, _ in battery) == 25

    def test_function_battery(self, laplace):
        battery = default_function_battery(laplace.space)
        labels = [label for label, _ in battery]
        assert len(battery) == 20
        assert "linear(0.5)" in labels
        assert "invv(-2)" in labels
        assert sum(label.startswith("tent") for label in labels) == 10

    def test_function_battery_is_seeded(self, laplace):
        first = default_function_battery(laplace.space, seed=7)
        second = default_function_battery(laplace.space, seed=7)
        assert [label for label, _ in first] == [label for label, _ in second]
        np.testing.assert_array_equal(first[-1][1].values, second[-1][1].values)


class TestVerifyLdp:
    """Sandwich bounds on point-sets"""

    def test_laplace_with_its_rate(self, laplace, laplace_rate):
        A = box_set(laplace.space, (1.0,), (2.0,))
        report = verify_ldp(laplace, laplace_rate, [("[1,2]", A), full_set(laplace.space)])
        assert report.summary.ldp_pass
        record = report.sets[0]
        assert record.descriptor == "[1,2]"
        assert record.lower_bound == pytest.approx(-1.01)
        assert record.upper_bound == pytest.approx(-0.99)
        assert record.J_lower <= record.J_upper
        assert report.sets[1].descriptor == "set[1]"
        assert report.sets[1].J_upper == pytest.approx(0.0, abs=1e-9)

    def test_wrong_rate_fails(self, laplace):
        """x^2 / 2 is too small on [1, 2]: -0.51 against about -1"""
        rate = RateField.from_array(laplace.space, laplace.space.points[:, 0] ** 2 / 2.0)
        A = box_set(laplace.space, (1.0,), (2.0,))
        report = verify_ldp(laplace, rate, [A])
        assert not report.summary.ldp_pass
        assert report.sets[0].lower_bound == pytest.approx(-0.51005)
        assert report.sets[0].J_lower == pytest.approx(-1.0, abs=1e-2)

    def test_default_battery_passes(self, laplace, laplace_rate):
        report = verify_ldp(laplace, laplace_rate, default_set_battery(laplace.space))
        assert report.summary.ldp_pass, [r.descriptor for r in report.sets if not r.passed]
        assert report.provenance["model"] == "laplace"

    def test_exposed_mask_restricts_the_lower_bound(self, laplace, laplace_rate):
        A = box_set(laplace.space, (1.0,), (2.0,))
        nowhere = np.zeros(laplace.space.size, dtype=bool)
        report = verify_ldp(laplace, laplace_rate, [A], exposed_mask=nowhere)
        assert report.sets[0].lower_bound == -math.inf
        assert report.summary.ldp_pass

    def test_requires_sets(self, laplace, laplace_rate):
        with pytest.raises(ConcentrationError):
            verify_ldp(laplace, laplace_rate, [])

    def test_set_length_is_checked(self, laplace, laplace_rate):
        with pytest.raises(ConcentrationError):
            verify_ldp(laplace, laplace_rate, [np.ones(3, dtype=bool)])


class TestVerifyLp:
    """lim (1/n) log E_n(e^{nf}) = sup (f - I)"""

    def test_laplace(self, laplace, laplace_rate, linear_function):
        functions = [
            ("half", linear_function(laplace.space, 0.5)),
            ("constant", GridFunction.constant(laplace.space, 1.5)),
            ("peak", GridFunction.from_array(laplace.space, 1.0 - 2.0 * np.abs(laplace.space.points[:, 0] - 1.0))),
        ]
        report = verify_lp(laplace, laplace_rate, functions)
        assert report.summary.lp_pass
        by_id = {r.function_id: r for r in report.functions}
        assert by_id["constant"].sup_f_minus_rate == pytest.approx(1.5)
        assert by_id["peak"].sup_f_minus_rate == pytest.approx(0.0)
        assert by_id["half"].entropy_upper == pytest.approx(0.0, abs=1e-2)

    def test_functions_outside_the_growth_class_are_skipped(self, laplace, laplace_rate, linear_function):
        report = verify_lp(laplace, laplace_rate, [linear_function(laplace.space, 0.5),
                                                   linear_function(laplace.space, 1.2)])
        assert report.summary.skipped_functions == 1
        assert report.functions[1].skipped
        assert report.functions[1].function_id == "f[1]"
        assert report.summary.lp_pass

    def test_fallback_members_are_kept(self, laplace, laplace_rate, linear_function):
        """0.9 x is in the class through t = 1.1"""
        report = verify_lp(laplace, laplace_rate, [linear_function(laplace.space, 0.9)])
        assert report.summary.skipped_functions == 0
        assert not report.functions[0].skipped

    def test_only_skipped_functions_do_not_pass(self, laplace, laplace_rate, linear_function):
        report = verify_lp(laplace, laplace_rate, [linear_function(laplace.space, 0.95)])
        assert not report.summary.lp_pass

    def test_wrong_rate_fails(self, laplace, linear_function):
        rate = RateField.from_array(laplace.space, np.zeros(laplace.space.size))
        report = verify_lp(laplace, rate, [linear_function(laplace.space, 0.5)])
        assert not report.summary.lp_pass
        assert report.functions[0].sup_f_minus_rate == pytest.approx(1.5)

    def test_gaussian_battery(self, gaussian, gaussian_rate):
        """Kinked maxima converge like log(n) / n, hence the wider tolerance"""
        report = verify_lp(gaussian, gaussian_rate, default_function_battery(gaussian.space), tolerance=2e-2)
        assert report.summary.lp_pass, [r.function_id for r in report.functions if not r.passed]
        assert report.summary.skipped_functions == 0


class TestLdpImpliesLp:
    """A passing LDP must come with a passing Laplace principle"""

    def test_laplace(self, laplace, laplace_rate):
        report = check_ldp_implies_lp(laplace, laplace_rate)
        assert report.passed
        assert report.details["ldp_pass"]
        assert not report.details["vacuous"]
        assert report.details["lp_tolerance"] == pytest.approx(2e-2)

    def test_vacuous_when_the_ldp_fails(self, laplace, linear_function):
        rate = RateField.from_array(laplace.space, laplace.space.points[:, 0] ** 2 / 2.0)
        report = check_ldp_implies_lp(laplace, rate, sets=[box_set(laplace.space, (1.0,), (2.0,))],
                                      functions=[linear_function(laplace.space, 0.5)])
        assert report.passed
        assert report.details["vacuous"]


class TestFiniteDimensionConditions:
    """Sufficient conditions over the linear family"""

    def test_laplace_breaks_lower_semicontinuity(self, laplace):
        """The entropy jumps from 0 to +inf at |y| = 1"""
        family = TestingFamily.linear(-1.5, 1.5, 0.05)
        report = finite_dimension_conditions(laplace, family)
        assert not report.passed
        assert report.details["a_entropy_converges"]
        assert report.details["b_origin_interior"]
        assert not report.details["c_lower_semicontinuous"]
        assert report.worst_violation == math.inf
        assert abs(report.witness["lsc"]["parameter"][0]) == pytest.approx(1.0)

    def test_laplace_inside_the_domain(self, laplace, linear_family):
        assert finite_dimension_conditions(laplace, linear_family).passed

    def test_gaussian(self, gaussian):
        """y^2 / 2 deviates from its one-sided extrapolation by the squared step"""
        report = finite_dimension_conditions(gaussian, TestingFamily.linear(-2.0, 2.0, 0.05))
        assert report.passed
        assert report.worst_violation == pytest.approx(0.0025, abs=1e-6)

    def test_needs_the_linear_family(self, laplace, invv_family):
        with pytest.raises(FamilyError):
            finite_dimension_conditions(laplace, invv_family)


class TestRateIdentification:
    """Minimal rates of the capacity concentrations at chosen points"""

    def test_laplace(self, laplace, laplace_rate):
        points = np.zeros(laplace.space.size, dtype=bool)
        for x in (0.0, 0.5, 1.0):
            points[laplace.space.index_of(x)] = True
        report = check_rate_identification(laplace, laplace_rate, points, tolerance=5e-2)
        assert report.passed
        assert report.details["points"] == 3

    def test_wrong_conjugate(self, laplace):
        rate = RateField.from_array(laplace.space, 2.0 * np.abs(laplace.space.points[:, 0]))
        points = np.zeros(laplace.space.size, dtype=bool)
        points[laplace.space.index_of(1.0)] = True
        report = check_rate_identification(laplace, rate, points, tolerance=5e-2)
        assert not report.passed
        assert report.worst_violation == pytest.approx(1.0, abs=1e-2)

    def test_no_points(self, laplace, laplace_rate):
        report = check_rate_identification(laplace, laplace_rate, np.zeros(laplace.space.size, dtype=bool), 5e-2)
        assert not report.passed
        assert report.details["reason"] == "no nice exposed points"


class TestPipeline:
    """Tightness, conjugate, exposed points, richness and the bounds"""

    def test_laplace_inverted_v_is_certified(self, laplace, invv_family):
        report, rate, exposed = gartner_ellis_pipeline(laplace, invv_family)
        assert report.summary.certified
        assert report.summary.ldp_pass and report.summary.lp_pass
        np.testing.assert_allclose(rate.values, np.abs(laplace.space.points[:, 0]), atol=1e-12)
        assert exposed.count == laplace.space.size
        assert report.steps["tightness"]["pass"]
        assert report.steps["richness"]["pass"]
        assert report.steps["rate_identification"]["pass"]
        assert "one_sided_bounds" not in report.steps
        assert report.provenance["model"] == "laplace"

    def test_laplace_linear_is_not_certified(self, laplace, linear_family):
        config = RunConfig(model="laplace", check_finite_dimension=True)
        report, _, exposed = gartner_ellis_pipeline(laplace, linear_family, config)
        assert report.summary.certified is False
        assert not report.steps["richness"]["pass"]
        assert report.steps["exposed"]["count"] == exposed.count == 1
        assert report.steps["one_sided_bounds"]["pass"]
        assert report.steps["finite_dimension"]["pass"]
        assert report.functions == []

    def test_robust_reports_one_sided_bounds(self, robust):
        family = TestingFamily.linear(-3.0, 3.0, 0.01)
        report, rate, _ = gartner_ellis_pipeline(robust, family)
        assert not report.summary.certified
        assert report.steps["one_sided_bounds"]["pass"]
        x = robust.space.points[:, 0]
        np.testing.assert_allclose(rate.values, np.maximum(np.abs(x) - 1.0, 0.0) ** 2 / 2.0, atol=1e-3)

    def test_custom_batteries(self, laplace, invv_family, linear_function):
        sets = [box_set(laplace.space, (1.0,), (2.0,))]
        functions = [linear_function(laplace.space, 0.25)]
        report, _, _ = gartner_ellis_pipeline(laplace, invv_family, sets=sets, functions=functions)
        assert len(report.sets) == 1
        assert len(report.functions) == 1
        assert report.summary.certified
