"""
Tests for the report records and the run configuration
"""
import math

import pytest
from pydantic import ValidationError

from ldlab.models import (
    CheckReport,
    FunctionRecord,
    LdpReport,
    LdpSummary,
    RunConfig,
    SetRecord,
    to_jsonable,
)


def set_record(passed: bool) -> SetRecord:
    return SetRecord(descriptor="A", lower_bound=-1.0, J_lower=-1.0, J_upper=-1.0, upper_bound=-1.0,
                     passed=passed)


class TestToJsonable:
    def test_infinities_and_nested_containers(self):
        assert to_jsonable({"a": (math.inf, [-math.inf, 1.5]), 2: True}) == {"a": ["inf", ["-inf", 1.5]], "2": True}


class TestCheckReport:
    def test_alias_and_infinity(self):
        report = CheckReport.model_validate({"check": "tightness", "pass": True, "worst_violation": "inf"})
        assert report.passed
        assert report.worst_violation == math.inf
        dumped = report.model_dump(mode="json", by_alias=True)
        assert dumped["pass"] is True
        assert dumped["worst_violation"] == "inf"


class TestLdpReport:
    """Summary flags must agree with the per-item records"""

    def test_consistent(self):
        report = LdpReport(summary=LdpSummary(ldp_pass=True, lp_pass=False, tolerance=0.01),
                           sets=[set_record(True)])
        assert report.summary.proxy == "tail-window"

    def test_ldp_pass_contradiction(self):
        with pytest.raises(ValidationError):
            LdpReport(summary=LdpSummary(ldp_pass=True, lp_pass=False, tolerance=0.01), sets=[set_record(False)])

    def test_lp_pass_ignores_skipped_functions(self):
        functions = [FunctionRecord(function_id="f", entropy_lower=0.0, entropy_upper=0.0, sup_f_minus_rate=0.0,
                                    passed=True),
                     FunctionRecord(function_id="g", skipped=True, passed=False)]
        report = LdpReport(summary=LdpSummary(ldp_pass=False, lp_pass=True, tolerance=0.01), functions=functions)
        assert report.model_dump(mode="json", by_alias=True)["functions"][1]["pass"] is False

    def test_lp_pass_contradiction(self):
        functions = [FunctionRecord(function_id="f", passed=False)]
        with pytest.raises(ValidationError):
            LdpReport(summary=LdpSummary(ldp_pass=False, lp_pass=True, tolerance=0.01), functions=functions)


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.model == "laplace"
        assert config.tail_window == 3
        assert config.tolerance == 1e-2
        assert config.out == "results"

    def test_frozen(self):
        with pytest.raises(ValidationError):
            RunConfig().tolerance = 0.5

    @pytest.mark.parametrize("field,value", [
        ("n_ladder", ()),
        ("n_ladder", (0, 4)),
        ("tightness_levels", (-1.0,)),
        ("radius", 0.0),
        ("ball_radii", ()),
        ("margin", 0.0),
        ("entropy_source", "guess"),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(ValidationError):
            RunConfig(**{field: value})

    def test_provenance_is_json_ready(self):
        provenance = RunConfig(ball_radii=(0.1, 0.5)).provenance()
        assert provenance["ball_radii"] == [0.1, 0.5]
        assert provenance["n_ladder"][0] == 4
