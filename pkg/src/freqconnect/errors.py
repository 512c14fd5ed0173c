"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for bad input data, 4 for numerical failures.
"""


class FreqConnectError(Exception):
    exit_code = 1


class ConfigError(FreqConnectError, ValueError):
    exit_code = 2


class CoverageError(ConfigError):
    """A band partition or posterior group does not cover what it must."""


class InsufficientDrawsError(ConfigError):
    pass


class DataError(FreqConnectError, ValueError):
    exit_code = 3


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class DimensionError(DataError):
    pass


class DomainError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericalError(FreqConnectError, ArithmeticError):
    exit_code = 4


class ConditioningError(NumericalError):
    pass


class DegeneracyError(NumericalError):
    pass


class DegenerateTestError(NumericalError):
    """Posterior draws of a band difference have zero variance."""


class ContractError(NumericalError):
    pass


class SimulationError(NumericalError):
    pass
