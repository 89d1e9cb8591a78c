"""Exception hierarchy shared by all modules."""


class WintgenKitError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(WintgenKitError):
    """Operands of incompatible shapes/lengths."""


class DomainError(WintgenKitError):
    """Input violates a domain precondition (e.g. non-unit sphere point).

    Carries the measured defect in ``defect``.
    """

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class SignatureError(WintgenKitError):
    """A subspace does not have the requested metric signature."""


class DegenerateRankError(WintgenKitError):
    """Vectors are numerically rank deficient."""


class UmbilicError(WintgenKitError):
    """Point is umbilic; the conformal normalisation is singular there."""

    def __init__(self, message, rho_sq=None):
        super().__init__(message)
        self.rho_sq = rho_sq


class EvaluationError(WintgenKitError):
    """Chart/curve evaluation hit a singularity of the expression.

    ``where`` holds the offending sub-expression source.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class ChartFormatError(WintgenKitError):
    """Malformed chart or seed document."""


class NotWintgenError(WintgenKitError):
    """Operation requires a Wintgen ideal point."""


class DegenerateWintgenError(WintgenKitError):
    """Traceless shape-operator span is not two dimensional."""


class FitFailureError(WintgenKitError):
    """Canonical frame fit residual above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularInvariantError(WintgenKitError):
    """Invariant undefined because L vanishes at the point."""


class SeedDegeneracyError(WintgenKitError):
    """Isotropic-curve seed fails a construction invariant."""

    def __init__(self, message, invariant=None):
        super().__init__(message)
        self.invariant = invariant
