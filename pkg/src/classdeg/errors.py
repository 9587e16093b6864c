"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for invalid input, 3 for a search or selection that came back empty,
4 for resource limits.
"""


class ClassdegError(Exception):
    exit_code = 2


class ValidationError(ClassdegError):
    """Malformed input file or argument."""


class EmptyShift(ValidationError):
    pass


class UnknownSymbol(ValidationError):
    pass


class IllegalWord(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class SymbolMismatch(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class ZeroMassWord(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class DegenerateSeparator(ValidationError):
    pass


class NotRoutable(ClassdegError):
    pass


class NotUnique(ClassdegError):
    pass


class NoCommonSymbol(ClassdegError):
    pass


class RoutingGap(ClassdegError):
    pass


class NoOccurrences(ClassdegError):
    pass


class TooFewMarks(ClassdegError):
    pass


class NotFoundWithinBound(ClassdegError):
    exit_code = 3

    def __init__(self, message, best_depth=None):
        super().__init__(message)
        self.best_depth = best_depth


class NoFeasibleCell(ClassdegError):
    exit_code = 3


class ResourceLimit(ClassdegError):
    exit_code = 4


class PeriodTooLarge(ResourceLimit):
    pass
