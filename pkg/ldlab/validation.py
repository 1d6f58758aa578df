"""
Validation of command-line spec strings and configuration documents.
Collects every problem with a field name before anything is computed.
"""
from typing import Any, Dict, List, Optional, Tuple
import re

import numpy as np
from pydantic import ValidationError

from ldlab.error_handlers import UsageError2
from ldlab.models import RunConfig
from ldlab.services.extgrid import GridFunction, GridSpace

MAX_GRID_POINTS = 250_000
FAMILY_KINDS = ("linear", "invv", "custom")
FUNCTION_KINDS = ("const", "linear", "invv", "file")
MODEL_ID_PATTERN = re.compile(r"^(laplace|gaussian(\(\s*[+-]?\d+(\.\d+)?\s*\))?|robust:.+|lattice:.+)$")


class ValidationResult:
    """Result of validation with detailed error information"""

    def __init__(self, is_valid: bool = True, errors: List[Dict[str, Any]] = None):
        self.is_valid = is_valid
        self.errors = errors or []

    def add_error(self, field: str, message: str, code: str = "invalid"):
        """Add a validation error"""
        self.is_valid = False
        self.errors.append({
            "field": field,
            "message": message,
            "code": code
        })

    def merge(self, other: "ValidationResult"):
        for error in other.errors:
            self.add_error(error["field"], error["message"], error["code"])

    def raise_if_invalid(self, message: str = "Invalid arguments"):
        if not self.is_valid:
            raise UsageError2(message, {"validation_errors": self.errors})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "is_valid": self.is_valid,
            "errors": self.errors,
            "error_count": len(self.errors)
        }


def _floats(text: str) -> Optional[List[float]]:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError:
        return None


class SpecValidator:
    """Checks for grid, model, family and function spec strings"""

    @staticmethod
    def validate_grid(spec: Any) -> ValidationResult:
        """'lower,upper,points' per axis, axes separated by ';'"""
        result = ValidationResult()
        if not spec or not isinstance(spec, str):
            result.add_error("grid", "Grid spec must be a non-empty string", "required")
            return result
        total = 1
        for i, axis in enumerate(spec.split(";")):
            field = f"grid[{i}]"
            parts = _floats(axis)
            if parts is None or len(parts) != 3:
                result.add_error(field, f"Axis '{axis}' must be 'lower,upper,points'", "invalid_format")
                continue
            lower, upper, points = parts
            if not lower < upper:
                result.add_error(field, f"Lower bound {lower:g} must be below upper bound {upper:g}", "invalid_bounds")
            if points != int(points) or points < 2:
                result.add_error(field, "Points per axis must be an integer of at least 2", "invalid_points")
            else:
                total *= int(points)
        if result.is_valid and total > MAX_GRID_POINTS:
            result.add_error("grid", f"Grid cannot exceed {MAX_GRID_POINTS} points (current: {total})", "too_large")
        return result

    @staticmethod
    def validate_model_id(model_id: Any) -> ValidationResult:
        result = ValidationResult()
        if not model_id or not isinstance(model_id, str):
            result.add_error("model", "Model id is required", "required")
        elif not MODEL_ID_PATTERN.match(model_id.strip()):
            result.add_error("model", f"Unknown model id '{model_id}'", "unknown_model")
        return result

    @staticmethod
    def validate_family(spec: Any) -> ValidationResult:
        result = ValidationResult()
        if not spec or not isinstance(spec, str):
            result.add_error("family", "Family spec is required", "required")
            return result
        kind, _, body = spec.partition(":")
        if kind not in FAMILY_KINDS:
            result.add_error("family", f"Family kind must be one of {', '.join(FAMILY_KINDS)}", "unknown_family")
        elif kind == "custom":
            if not body.strip():
                result.add_error("family", "Custom family needs a file path", "required")
        else:
            parts = _floats(body)
            if parts is None or len(parts) != 3:
                result.add_error("family", f"Family spec must be '{kind}:min,max,step'", "invalid_format")
            elif parts[2] <= 0:
                result.add_error("family", "Family step must be positive", "invalid_step")
            elif parts[0] > parts[1]:
                result.add_error("family", "Family range is empty", "invalid_bounds")
        return result

    @staticmethod
    def validate_function(spec: Any, index: int = 0) -> ValidationResult:
        result = ValidationResult()
        field = f"functions[{index}]"
        if not spec or not isinstance(spec, str):
            result.add_error(field, "Function spec must be a non-empty string", "required")
            return result
        kind, _, body = spec.partition(":")
        if kind not in FUNCTION_KINDS:
            result.add_error(field, f"Function kind must be one of {', '.join(FUNCTION_KINDS)}", "unknown_function")
        elif kind == "file":
            if not body.strip():
                result.add_error(field, "File function needs a path", "required")
        elif _floats(body) is None:
            result.add_error(field, f"'{spec}' has a non-numeric parameter", "invalid_format")
        elif kind in ("const", "invv") and len(body.split(",")) != 1:
            result.add_error(field, f"'{kind}' takes exactly one parameter", "invalid_format")
        return result


def validate_config(data: Dict[str, Any]) -> ValidationResult:
    """Pydantic validation of a configuration document plus the spec-string checks"""
    result = ValidationResult()
    try:
        RunConfig(**data)
    except ValidationError as e:
        for error in e.errors():
            field = ".".join(str(loc) for loc in error.get('loc', ['unknown']))
            result.add_error(field, f"Validation failed: {error.get('msg', 'Invalid value')}", "pydantic_error")
    if data.get("model") is not None:
        result.merge(SpecValidator.validate_model_id(data["model"]))
    if data.get("grid") is not None:
        result.merge(SpecValidator.validate_grid(data["grid"]))
    if data.get("family") is not None:
        result.merge(SpecValidator.validate_family(data["family"]))
    for i, spec in enumerate(data.get("functions") or []):
        result.merge(SpecValidator.validate_function(spec, i))
    return result


def parse_grid(spec: str) -> GridSpace:
    SpecValidator.validate_grid(spec).raise_if_invalid("Invalid grid spec")
    axes = [[float(p) for p in axis.split(",")] for axis in spec.split(";")]
    return GridSpace(lower=tuple(a[0] for a in axes), upper=tuple(a[1] for a in axes),
                     points_per_axis=tuple(int(a[2]) for a in axes))


def parse_function(spec: str, space: GridSpace, index: int = 0) -> Tuple[str, GridFunction]:
    """const:c | linear:y_1,...,y_d | invv:a | file:<csv>"""
    SpecValidator.validate_function(spec, index).raise_if_invalid("Invalid function spec")
    kind, _, body = spec.partition(":")
    pts = space.points
    if kind == "file":
        from ldlab.services.storage import read_grid_function
        f = read_grid_function(body.strip())
        space.require_same(f.space)
        return spec, f
    params = [float(p) for p in body.split(",")]
    if kind == "const":
        return spec, GridFunction.constant(space, params[0])
    if kind == "linear":
        if len(params) != space.dim:
            raise UsageError2(f"'{spec}' needs {space.dim} slope(s)")
        return spec, GridFunction.from_array(space, pts @ np.asarray(params))
    if space.dim != 1:
        raise UsageError2("Inverted-v functions are one-dimensional")
    a = params[0]
    return spec, GridFunction.from_array(space, abs(a) - 2.0 * np.abs(pts[:, 0] - a))
