"""Exception types raised across the package."""


class CovTestError(ValueError):
    """Base class for input and numerical errors."""


class MalformedMatrix(CovTestError):
    pass


class ZeroVarianceRow(CovTestError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero variance")
        self.row = row


class SubsetTooSmall(CovTestError):
    pass


class RankDeficientDesign(CovTestError):
    pass


class ConstantOutcome(CovTestError):
    pass


class EmptyGroup(CovTestError):
    pass


class AllPairsDegenerate(CovTestError):
    pass


class DegenerateInput(CovTestError):
    pass


class InvalidPlan(CovTestError):
    pass


class TooLarge(CovTestError):
    pass


class InvalidParams(CovTestError):
    pass


class MalformedLine(CovTestError):
    def __init__(self, line_number: int, reason: str = "expected id, description and members"):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number


class OutOfRange(CovTestError):
    pass


class Unsupported(CovTestError):
    pass


class MomentFitWarning(RuntimeWarning):
    """The four-moment fit left the beta region; a normal tail was used instead."""
