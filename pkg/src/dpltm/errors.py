class DpltmError(Exception):
    exit_code = 1


class ConfigError(DpltmError, ValueError):
    exit_code = 2


class DataError(DpltmError, ValueError):
    exit_code = 3


class NumericalError(DpltmError, ArithmeticError):
    exit_code = 4


class SingularInformationError(NumericalError):
    pass
