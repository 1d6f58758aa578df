"""
Tests for the convex integral, rate fields, minimal rates and the duality checks
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldlab.error_handlers import GridError, SpaceMismatchError
from ldlab.services.concentration import (
    Concentration,
    capacity_limit_concentration,
    check_weak_maxitivity,
    maxplus_concentration,
)
from ldlab.services.cvxint import (
    RateField,
    RateProvenance,
    check_duality_bounds,
    check_integral_properties,
    convex_integral,
    default_radii,
    maxplus_oracle,
    minimal_rate,
)
from ldlab.services.extgrid import ZERO, ExtendedValue, GridFunction, GridSpace, full_set, mask


def flat_concentration(space):
    """J(A) = 0 for every nonempty A"""
    return Concentration(space, lambda points: ZERO, description="flat")


def share_concentration(space):
    """Monotone but not maxitive: J(A) = -(1 - |A| / |E|)"""
    return Concentration(space, lambda points: -(1.0 - points.sum() / space.size), description="share")


@st.composite
def density_and_function(draw):
    size = draw(st.integers(min_value=2, max_value=12))
    dyadic = st.integers(min_value=-40, max_value=40).map(lambda k: k / 8.0)
    j = draw(st.lists(st.integers(min_value=-40, max_value=0).map(lambda k: k / 8.0), min_size=size, max_size=size))
    j[draw(st.integers(min_value=0, max_value=size - 1))] = 0.0
    f = draw(st.lists(st.one_of(dyadic, st.just(-math.inf)), min_size=size, max_size=size))
    return j, f


@st.composite
def grid_spaces(draw, max_points=12):
    """Line grids up to max_points or plane grids up to 3 x 3, with dyadic bounds"""
    if draw(st.booleans()):
        counts = (draw(st.integers(min_value=2, max_value=max_points)),)
    else:
        counts = (draw(st.integers(min_value=2, max_value=3)), draw(st.integers(min_value=2, max_value=3)))
    lower = tuple(draw(st.integers(min_value=-16, max_value=0)) / 4.0 for _ in counts)
    upper = tuple(lo + draw(st.integers(min_value=1, max_value=16)) / 4.0 for lo in lower)
    return GridSpace(lower=lower, upper=upper, points_per_axis=counts)


@st.composite
def maxplus_on_random_space(draw, max_points=12):
    space = draw(grid_spaces(max_points))
    j = draw(st.lists(st.integers(min_value=-40, max_value=0).map(lambda k: k / 8.0),
                      min_size=space.size, max_size=space.size))
    j[draw(st.integers(min_value=0, max_value=space.size - 1))] = 0.0
    return maxplus_concentration(space, j)


class TestConvexIntegral:
    """phi_J(f) = sup_c {c + J({f >= c})}"""

    def test_maxplus_example(self, three_points, maxplus_j):
        """j = (0, -1, -2), f = (1, 5, 10) gives max(1, 4, 8) = 8"""
        f = GridFunction.from_array(three_points, [1.0, 5.0, 10.0])
        assert convex_integral(maxplus_j, f) == ExtendedValue.finite(8.0)

    def test_constant(self, three_points, maxplus_j):
        assert convex_integral(maxplus_j, GridFunction.constant(three_points, 2.5)) == ExtendedValue.finite(2.5)

    def test_masked_zero_is_the_concentration(self, three_points, maxplus_j):
        """phi_J(-inf 1_{A^c}) = J(A)"""
        zero = GridFunction.constant(three_points, 0.0)
        for bits in ([True, False, False], [False, True, True], [False, False, True], [False, False, False]):
            A = np.array(bits)
            assert convex_integral(maxplus_j, mask(zero, A)) == maxplus_j.eval(A)

    def test_neg_inf_function(self, three_points, maxplus_j):
        assert convex_integral(maxplus_j, GridFunction.neg_inf(three_points)).to_float() == -math.inf

    def test_strict_level_sets_agree_on_grids(self, three_points, maxplus_j):
        f = GridFunction.from_array(three_points, [1.0, 5.0, 10.0])
        assert convex_integral(maxplus_j, f, strict=True) == convex_integral(maxplus_j, f)

    def test_space_mismatch(self, plane, maxplus_j):
        with pytest.raises(SpaceMismatchError):
            convex_integral(maxplus_j, GridFunction.constant(plane, 0.0))

    @given(density_and_function())
    @settings(max_examples=200, deadline=None)
    def test_agrees_with_maxplus_oracle(self, drawn):
        """On maxitive densities the integral is max(f + j)"""
        j, f = drawn
        space = GridSpace.line(0.0, 1.0, len(j))
        J = maxplus_concentration(space, j)
        f = GridFunction.from_array(space, f)
        expected = maxplus_oracle(GridFunction.from_array(space, j), f).to_float()
        actual = convex_integral(J, f).to_float()
        if expected == -math.inf:
            assert actual == -math.inf
        else:
            assert actual == pytest.approx(expected, abs=1e-12)


class TestRateField:
    """Rates take values in [0, +inf]"""

    def test_negative_values_rejected(self, three_points):
        with pytest.raises(GridError):
            RateField.from_array(three_points, [0.0, -1.0, 2.0])

    def test_infinite_values_allowed(self, three_points):
        rate = RateField.from_array(three_points, [math.inf, 0.0, 1.0])
        assert rate.value_at(0).to_float() == math.inf

    def test_inf_over(self, three_points):
        rate = RateField.from_array(three_points, [2.0, 0.5, 1.0])
        assert rate.inf_over(np.array([True, False, True])) == 1.0
        assert rate.inf_over(np.zeros(3, dtype=bool)) == math.inf

    def test_sup_of_difference(self, three_points):
        """sup (f - I) skips points where I = +inf"""
        rate = RateField.from_array(three_points, [math.inf, 0.5, 1.0])
        f = GridFunction.from_array(three_points, [10.0, 1.0, 1.0])
        assert rate.sup_of_difference(f) == 0.5


class TestMinimalRate:
    """I_min(x) = -inf over shrinking balls of J(ball)"""

    def test_discrete_space(self, three_points, maxplus_j):
        """The radius ladder ends at 0, so I_min = -j"""
        rate = minimal_rate(maxplus_j)
        np.testing.assert_allclose(rate.values, [0.0, 1.0, 2.0])
        assert rate.provenance == RateProvenance.MINIMAL
        assert rate.diagnostics["radii"][-1] == 0.0

    def test_flat_concentration(self, plane):
        assert np.all(minimal_rate(flat_concentration(plane)).values == 0.0)

    def test_laplace_half(self, laplace):
        """Upper capacity concentration of the Laplace model gives about 0.5 at x = 0.5"""
        index = laplace.space.index_of(0.5)
        points = np.zeros(laplace.space.size, dtype=bool)
        points[index] = True
        rate = minimal_rate(capacity_limit_concentration(laplace, "upper"), points=points)
        assert rate.values[index] == pytest.approx(0.5, abs=1e-2)
        assert math.isinf(rate.values[0])

    def test_default_radii_end_at_zero(self, laplace):
        radii = default_radii(laplace.space)
        assert radii[0] == 3.0
        assert radii[-2:] == (laplace.space.min_step, 0.0)
        assert all(b <= a for a, b in zip(radii, radii[1:]))

    def test_radius_ladder_validation(self, maxplus_j):
        with pytest.raises(GridError):
            minimal_rate(maxplus_j, radii=())
        with pytest.raises(GridError):
            minimal_rate(maxplus_j, radii=(0.0, 1.0))


class TestDualityBounds:
    """Set and function forms of the lower and upper bounds"""

    def test_idempotent_duality(self, three_points, maxplus_j):
        """I = -j satisfies both bounds with equality"""
        rate = RateField.from_array(three_points, [0.0, 1.0, 2.0])
        report = check_duality_bounds(maxplus_j, rate)
        assert report.passed
        assert report.details["mode"] == "exhaustive"
        assert report.details["subsets"] == 8
        assert report.details["bounds_hold"]

    def test_trivial_pair(self, three_points):
        """I = 0 and J = 0 on nonempty sets"""
        rate = RateField.from_array(three_points, [0.0, 0.0, 0.0])
        report = check_duality_bounds(flat_concentration(three_points), rate)
        assert report.passed and report.details["bounds_hold"]

    def test_infinite_rate_breaks_both_forms(self, three_points):
        """J_C <= -inf_C I fails for I = +inf and a violating function is found"""
        rate = RateField.from_array(three_points, [math.inf] * 3)
        report = check_duality_bounds(flat_concentration(three_points), rate)
        upper = report.details["upper"]
        assert not upper["set_holds"]
        assert not upper["function_holds"]
        assert upper["consistent"]
        assert report.details["lower"]["set_holds"]
        assert report.passed
        assert not report.details["bounds_hold"]
        assert report.witness["upper_set"] is not None
        assert report.witness["upper_function"] is not None

    def test_wrong_rate_is_reported(self, three_points, maxplus_j):
        rate = RateField.from_array(three_points, [0.0, 0.0, 0.0])
        report = check_duality_bounds(maxplus_j, rate)
        assert report.passed
        assert not report.details["lower"]["set_holds"]
        assert not report.details["lower"]["function_holds"]
        assert report.details["upper"]["set_holds"]
        assert report.worst_violation == pytest.approx(2.0)

    def test_sampled_mode_on_larger_grids(self, plane):
        rate = RateField.from_array(plane, np.zeros(plane.size))
        report = check_duality_bounds(flat_concentration(plane), rate, trials=20)
        assert report.details["mode"] == "sampled"
        assert report.details["subsets"] == 20
        assert report.passed


class TestIntegralProperties:
    """Properties b1-b5 for every concentration, b6-b7 for maxitive ones"""

    def test_maxitive_density(self, maxplus_j):
        report = check_integral_properties(maxplus_j, trials=30)
        assert report.passed, report.details["violations"]
        assert set(report.details["violations"]) == {"b1", "b2", "b3", "b4", "b5", "b6", "b7"}

    def test_monotone_concentration(self, plane):
        report = check_integral_properties(share_concentration(plane), trials=20)
        assert report.passed, report.details["violations"]
        assert "b6" not in report.details["violations"]

    def test_trials_must_be_positive(self, maxplus_j):
        with pytest.raises(GridError):
            check_integral_properties(maxplus_j, trials=0)

    def test_whole_space_value(self, plane):
        assert share_concentration(plane).eval(full_set(plane)) == ZERO


class TestOnRandomSpaces:
    """Maxitive densities drawn on random line and plane grids"""

    @given(maxplus_on_random_space())
    @settings(max_examples=40, deadline=None)
    def test_integral_properties(self, J):
        report = check_integral_properties(J, trials=10)
        assert report.passed, report.details["violations"]
        assert {"b6", "b7"} <= set(report.details["violations"])

    @given(maxplus_on_random_space(max_points=8))
    @settings(max_examples=25, deadline=None)
    def test_minimal_rate_satisfies_the_duality_bounds(self, J):
        """Weakly maxitive J: the minimal rate meets both bounds"""
        assert check_weak_maxitivity(J, cover_trials=10).passed
        rate = minimal_rate(J)
        report = check_duality_bounds(J, rate)
        assert report.details["mode"] == "exhaustive"
        assert report.passed
        assert report.details["bounds_hold"], report.witness
