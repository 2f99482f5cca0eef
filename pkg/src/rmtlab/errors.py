"""Exception hierarchy shared by all rmtlab modules.

Each class carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class RmtLabError(Exception):
    exit_code = 1


class ConfigError(RmtLabError, ValueError):
    """Invalid experiment configuration or argument combination."""

    exit_code = 2


class DomainError(RmtLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class InvalidDimensionError(DomainError):
    pass


class InvalidInputError(DomainError):
    pass


class PreconditionError(DomainError):
    pass


class SingularMatrixError(RmtLabError, ArithmeticError):
    exit_code = 2


class InconsistentMomentsError(DomainError):
    pass


class InsufficientDataError(RmtLabError, ValueError):
    exit_code = 2


class CapacityError(RmtLabError):
    """An enumeration or search guard was exceeded."""

    exit_code = 3


class NonTerminationError(CapacityError):
    pass


class OutputIOError(RmtLabError, OSError):
    exit_code = 4


class MalformedRecordError(RmtLabError, ValueError):
    exit_code = 5
