"""Exception types shared across the package."""


class LinverseError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LinverseError):
    """Operands have incompatible shapes."""


class NotSymmetric(LinverseError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class NotPsd(LinverseError):
    """Matrix has an eigenvalue below the negative tolerance."""


class ConvergenceFailure(LinverseError):
    """An iterative routine hit its iteration cap without stabilizing."""


class DimensionTooLarge(LinverseError):
    """Exhaustive grid search requested in too many dimensions."""


class UnattainedInfimum(LinverseError):
    """Unpenalized infimum requested on a rank-deficient system without a search radius."""


class NonpositiveTau(LinverseError):
    """Loss-transformation requested with a nonpositive conditioning scale."""


class NoUniqueStationary(LinverseError):
    """Power iteration for the stationary distribution did not converge."""


class SingularSystem(LinverseError):
    """Linear system solve failed unexpectedly."""


class RankDeficientC(LinverseError):
    """Feature second-moment matrix is numerically singular where its inverse is required."""


class EmptyTrajectory(LinverseError):
    """Empirical system requested from a trajectory with no transitions."""


class EmptySample(LinverseError):
    """Calibration or coverage requested on an empty sample."""


class DegenerateSample(LinverseError):
    """All calibration replications are zero; the tail model would be vacuous."""


class InsufficientPoints(LinverseError):
    """Rate fit needs at least three distinct sample sizes."""


class ParseError(LinverseError):
    """A structured input document is malformed."""
