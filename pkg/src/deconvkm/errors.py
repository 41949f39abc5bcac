"""Exception hierarchy shared across the package."""


class DeconvError(Exception):
    """Base class for all package errors."""


class ParameterError(DeconvError, ValueError):
    pass


class UnsupportedDimensionError(ParameterError):
    pass


class ConfigError(ParameterError):
    pass


class NumericalError(DeconvError, ArithmeticError):
    """Raised when a computation cannot be carried out reliably."""


class IllPosednessError(NumericalError):
    pass


class AsymmetricNoiseError(NumericalError):
    pass


class CoverageError(NumericalError):
    pass


class DegenerateConfigError(NumericalError):
    pass


class OracleInconsistencyError(DeconvError):
    pass


class ReplicationError(DeconvError):
    def __init__(self, message, seed):
        super().__init__(f"{message} (replay seed={seed})")
        self.seed = seed
