"""
Error handling for the large-deviations laboratory.
Every failure carries a process exit code the way API errors carry HTTP status codes.
"""
from typing import Dict, Any, List, Optional
import logging

logger = logging.getLogger(__name__)


class LabError(Exception):
    """Base laboratory error with consistent structure"""

    def __init__(
        self,
        message: str,
        exit_code: int = 2,
        error_code: str = "lab_error",
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class ViolationError1(LabError):
    """Exit 1 - a verified bound or identity failed"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, 1, "bound_violation", details)


class UsageError2(LabError):
    """Exit 2 - invalid flags, spec strings, config or input files"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, 2, "usage_error", details)


class NumericFailure3(LabError):
    """Exit 3 - quadrature or model consistency failure"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, 3, "numeric_failure", details)


class GridError(UsageError2):
    """Off-grid points, bad boxes, length mismatches"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "grid_error"


class SpaceMismatchError(UsageError2):
    """Objects living on different grid spaces were combined"""

    def __init__(self, message: str = "Objects are defined on different grid spaces",
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "space_mismatch"


class ExtendedArithmeticError(NumericFailure3):
    """Undefined extended-real operation such as NEG_INF + POS_INF"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "extended_arithmetic"


class ConcentrationError(UsageError2):
    """Set function outside [-inf, 0] or missing capacity support"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "concentration_error"


class ModelError(UsageError2):
    """Catalog model built on an unsuitable box or unknown id"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "model_error"


class FamilyError(UsageError2):
    """Empty or malformed testing family"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "family_error"


class PreconditionError(UsageError2):
    """Hypothesis of a lemma or theorem check is not met"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.error_code = "precondition_failed"


def create_error_report(
    message: str,
    exit_code: int,
    error_code: str = "error",
    details: Optional[Dict[str, Any]] = None,
    validation_errors: Optional[List[Dict[str, Any]]] = None
) -> Dict[str, Any]:
    """Create standardized error document"""

    error_data = {
        "error": True,
        "message": message,
        "error_code": error_code,
        "exit_code": exit_code
    }

    if details:
        error_data["details"] = details

    if validation_errors:
        error_data["validation_errors"] = validation_errors
        error_data["validation_error_count"] = len(validation_errors)

    logger.error(f"Lab error {exit_code}: {message}", extra={"details": details})

    return error_data


def create_lab_error_report(error: LabError) -> Dict[str, Any]:
    """Create error document from a raised LabError"""
    validation_errors = error.details.get("validation_errors") if error.details else None
    details = {k: v for k, v in error.details.items() if k != "validation_errors"}
    return create_error_report(
        message=error.message,
        exit_code=error.exit_code,
        error_code=error.error_code,
        details=details or None,
        validation_errors=validation_errors
    )


def handle_pydantic_validation_error(error) -> Dict[str, Any]:
    """Convert pydantic validation error to standardized error document"""
    validation_errors = []

    for err in error.errors():
        field = ".".join(str(loc) for loc in err.get('loc', []))
        validation_errors.append({
            "field": field,
            "message": err.get('msg', 'Invalid value'),
            "code": err.get('type', 'validation_error')
        })

    return create_error_report(
        message="Configuration validation failed",
        exit_code=ExitCodes.USAGE,
        error_code="pydantic_validation_error",
        validation_errors=validation_errors
    )


def create_success_report(
    data: Any,
    message: str = "Success",
    meta: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Create standardized success document"""
    report = {
        "success": True,
        "message": message,
        "data": data
    }

    if meta:
        report["meta"] = meta

    return report


class ExitCodes:
    """Process exit codes used by the command line"""
    CERTIFIED = 0
    VIOLATION = 1
    USAGE = 2
    NUMERIC = 3
