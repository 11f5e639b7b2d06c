"""Exception hierarchy.  ``exit_code`` is what the CLI returns for each family."""


class MZError(Exception):
    exit_code = 1


class ConfigError(MZError, ValueError):
    exit_code = 1


class OrderError(ConfigError):
    pass


class MeasureError(ConfigError):
    pass


class UnsupportedTermError(MZError):
    exit_code = 1


class ExtentError(MZError, ValueError):
    exit_code = 1


class AlignmentError(MZError, ValueError):
    exit_code = 1


class DivergenceError(MZError, ArithmeticError):
    exit_code = 2

    def __init__(self, msg, t=None, step=None, node=None):
        super().__init__(msg)
        self.t = t
        self.step = step
        self.node = node


class ConditioningError(MZError, ArithmeticError):
    exit_code = 2


class NumericalInconsistencyError(MZError, ArithmeticError):
    exit_code = 2


class EstimationFailed(MZError):
    exit_code = 3


class NoSwitchError(EstimationFailed):
    pass
