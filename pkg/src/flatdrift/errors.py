"""Exception hierarchy.

Every error carries a stable exit code used by the command line runner:
2 for invalid input, 3 for exhausted budgets.
"""


class FlatDriftError(Exception):
    exit_code = 1


class ValidationError(FlatDriftError, ValueError):
    exit_code = 2


class BudgetError(FlatDriftError, RuntimeError):
    exit_code = 3


# surface validation
class ClosureViolation(ValidationError):
    pass


class OrientationViolation(ValidationError):
    pass


class GluingMismatch(ValidationError):
    pass


class ConeAngleMismatch(ValidationError):
    pass


class NonpositiveDeterminant(ValidationError):
    pass


class DegenerateTriangle(ValidationError):
    pass


class DegeneratePlane(ValidationError):
    pass


class ZeroCorner(ValidationError):
    pass


class SlitHitsLattice(ValidationError):
    pass


class BadDiscriminant(ValidationError):
    pass


class NotSaturated(ValidationError):
    pass


class IrrationalPlane(ValidationError):
    pass


class NotInSkeleton(ValidationError):
    pass


class ResolutionTooCoarse(ValidationError):
    pass


# budgets
class FlipLimitExceeded(BudgetError):
    pass


class BudgetExceeded(BudgetError):
    pass


class WordBudgetExceeded(BudgetError):
    pass


class LoopStalled(BudgetError):
    pass
