from typing import Any, Dict, Optional

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_COMPUTATION = 3


class PolyfractError(Exception):
    """Base error. Carries a stable code and the CLI exit code it maps to."""

    code = "polyfract_error"
    exit_code = EXIT_COMPUTATION

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details,
            "exit_code": self.exit_code,
        }


class InvalidInputError(PolyfractError):
    code = "invalid_input"
    exit_code = EXIT_VALIDATION


class ComputationError(PolyfractError):
    code = "computation_error"
    exit_code = EXIT_COMPUTATION


# Parsing

class ExpressionSyntaxError(InvalidInputError):
    code = "syntax_error"

    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}", {"offset": offset, "text": text})
        self.offset = offset


class SystemFileSyntaxError(InvalidInputError):
    code = "syntax_error"

    def __init__(self, message: str, offset: Optional[int] = None):
        suffix = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{suffix}", {"offset": offset})
        self.offset = offset


class UnknownSymbolError(InvalidInputError):
    code = "unknown_symbol"


class IndexOutOfRangeError(InvalidInputError):
    code = "index_out_of_range"


class FieldTooSmallError(InvalidInputError):
    code = "field_too_small"


class UnknownGroupKindError(InvalidInputError):
    code = "unknown_group_kind"


class DuplicateCellIdError(InvalidInputError):
    code = "duplicate_cell_id"


class EmptyCellsError(InvalidInputError):
    code = "empty_cells"


class SystemSchemaError(InvalidInputError):
    code = "schema_error"


# Algebra and geometry

class NotRealError(ComputationError):
    code = "not_real"


class PrecisionExhaustedError(ComputationError):
    code = "precision_exhausted"


class CycloDivisionByZero(ComputationError, ZeroDivisionError):
    code = "division_by_zero"


class JTooSmallError(InvalidInputError):
    code = "j_too_small"


class NotInGroupError(InvalidInputError):
    code = "not_in_group"


# Graphs and words

class InternalInconsistencyError(ComputationError):
    code = "internal_inconsistency"


class TooLargeError(ComputationError):
    code = "too_large"


class UnknownWordError(InvalidInputError):
    code = "unknown_word"


class MembershipUnknownError(ComputationError):
    code = "membership_unknown"


# Conditions

class NotTrivialGroupError(InvalidInputError):
    code = "not_trivial_group"


class PreconditionFailedError(InvalidInputError):
    code = "precondition_failed"


# Paths

class BadLevelError(InvalidInputError):
    code = "bad_level"


class NotJoinableError(InvalidInputError):
    code = "not_joinable"


class ProjectionNotEllError(InvalidInputError):
    code = "projection_not_ell"


class BadIndicesError(InvalidInputError):
    code = "bad_indices"


class NoneFoundError(ComputationError):
    code = "none_found"


# Energy

class NonConvergenceError(ComputationError):
    code = "non_convergence"


class DegenerateEdgeError(ComputationError):
    code = "degenerate_edge"


class BadBracketError(InvalidInputError):
    code = "bad_bracket"
