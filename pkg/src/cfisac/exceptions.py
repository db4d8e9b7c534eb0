"""Exception hierarchy shared by the simulator modules."""


class ISACError(Exception):
    """Base class for all simulator errors."""


class InvalidConfigError(ISACError, ValueError):
    """A NetworkConfig (or sweep spec) violates its invariants."""


class ModeInfeasibleError(ISACError):
    """A BS mode vector violates the transmitter/receiver count constraints."""


class InfeasibleConstraintsError(ISACError):
    """The SINR targets cannot be met under the power budget."""


class InvalidFilterError(ISACError, ValueError):
    """A receive filter is identically zero on the receiver blocks."""


class NumericalDomainError(ISACError, ArithmeticError):
    """A matrix expected to be positive definite is not."""


class InvalidProblemError(ISACError, ValueError):
    """A conic problem has inconsistent dimensions."""


class SolverError(ISACError):
    """The conic solver stopped without a certified solution."""
