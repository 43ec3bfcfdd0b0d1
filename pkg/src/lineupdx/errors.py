"""Domain error hierarchy with stable machine-readable codes.

Every error carries a ``code`` string that is stable across releases; the CLI
prints it and the HTTP service returns it in ``{"code": ..., "message": ...}``
bodies, so downstream tooling can match on codes rather than messages.
"""

from __future__ import annotations


class LineupdxError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__doc__ or self.code)

    @property
    def message(self) -> str:
        return str(self)


# --- numerics ---------------------------------------------------------------

class RankDeficient(LineupdxError):
    """Design matrix is not of full column rank."""
    code = "rank_deficient"


class DimensionMismatch(LineupdxError):
    """Array dimensions are inconsistent."""
    code = "dimension_mismatch"


class InvalidDegreesOfFreedom(LineupdxError):
    """Degrees of freedom must be positive."""
    code = "invalid_degrees_of_freedom"


# --- simulate ---------------------------------------------------------------

class OrderTooLarge(LineupdxError):
    """Polynomial order outside the supported range."""
    code = "order_too_large"


class DegenerateRange(LineupdxError):
    """Predictor values span a zero range."""
    code = "degenerate_range"


class DegenerateDraw(LineupdxError):
    """Null residual draw collapsed to zero after bounded retries."""
    code = "degenerate_draw"


# --- conventional tests -----------------------------------------------------

class InsufficientData(LineupdxError):
    """Not enough observations for the requested test."""
    code = "insufficient_data"


class ConstantFitted(LineupdxError):
    """Fitted values carry no usable variation; augmented columns collinear."""
    code = "constant_fitted"


class SampleSizeOutOfRange(LineupdxError):
    """Sample size outside the validity range of the approximation."""
    code = "sample_size_out_of_range"


class ZeroVariance(LineupdxError):
    """Residuals have zero variance."""
    code = "zero_variance"


# --- effect size ------------------------------------------------------------

class LeverageOne(LineupdxError):
    """A leverage-one observation makes a residual diagonal entry vanish."""
    code = "leverage_one"


class SingularQuadraticForm(LineupdxError):
    """Mean vector falls outside the range of the quadratic-form matrix."""
    code = "singular_quadratic_form"


# --- lineup persistence -----------------------------------------------------

class IoError(LineupdxError):
    """Filesystem failure while saving or loading a bundle."""
    code = "io_error"


class CorruptManifest(LineupdxError):
    """Bundle manifest failed validation (checksum or schema mismatch)."""
    code = "corrupt_manifest"


# --- visual inference -------------------------------------------------------

class OutOfRangeSelection(LineupdxError):
    """Selection refers to a panel index outside 1..m."""
    code = "out_of_range_selection"


class MissingReason(LineupdxError):
    """Non-empty selections require a reason."""
    code = "missing_reason"


class NoEvaluations(LineupdxError):
    """No evaluations available for the requested lineup."""
    code = "no_evaluations"


class AlphaRequired(LineupdxError):
    """Alpha-adjusted mode needs an attractiveness concentration value."""
    code = "alpha_required"


class InsufficientNullData(LineupdxError):
    """Too few null lineups or evaluations to estimate the concentration."""
    code = "insufficient_null_data"


class NonConvergent(LineupdxError):
    """Likelihood search hit a bound without localizing a maximum."""
    code = "non_convergent"


# --- power ------------------------------------------------------------------

class Separation(LineupdxError):
    """All decisions identical; the slope likelihood is unbounded."""
    code = "separation"

    def __init__(self, message: str = "", sign: int = 0):
        super().__init__(message)
        self.sign = sign  # +1: all reject, -1: none reject


class AllDegenerate(LineupdxError):
    """Every bootstrap resample was degenerate."""
    code = "all_degenerate"


class IdMismatch(LineupdxError):
    """Lineup id sets differ between the two decision collections."""
    code = "id_mismatch"


# --- server -----------------------------------------------------------------

class MissingBundle(LineupdxError):
    """Study configuration references a bundle that does not exist."""
    code = "missing_bundle"


class StudyClosed(LineupdxError):
    """Study is closed to new assignments."""
    code = "study_closed"


class UnknownStudy(LineupdxError):
    """No study with that id."""
    code = "unknown_study"


class UnknownLineup(LineupdxError):
    """No lineup with that id in the study."""
    code = "unknown_lineup"


class NotAssigned(LineupdxError):
    """Submission does not match an open assignment."""
    code = "not_assigned"


class AlreadyAnswered(LineupdxError):
    """Assignment already has a stored evaluation."""
    code = "already_answered"


# --- cli --------------------------------------------------------------------

class UsageError(LineupdxError):
    """Invalid command-line usage."""
    code = "usage_error"
