"""Exception hierarchy shared by every subsystem.

Each class maps to one CLI exit code (see :mod:`amsn.cli`).
"""


class AMSNError(Exception):
    exit_code = 1


class DimensionError(AMSNError, ValueError):
    exit_code = 2


class ContractError(AMSNError, ValueError):
    exit_code = 2


class ConfigurationError(AMSNError, ValueError):
    exit_code = 2


class DataError(AMSNError):
    exit_code = 3


class ManifestError(DataError):
    pass


class EvaluationError(DataError):
    pass


class NumericError(AMSNError, ArithmeticError):
    exit_code = 4
