class MosError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MosError, ValueError):
    pass


class DataError(MosError, ValueError):
    pass


class ContractError(MosError, ValueError):
    """Raised when arguments violate a shape/kind contract between components."""


class NumericalError(MosError, ArithmeticError):
    pass


class CheckpointError(MosError):
    """Raised when a checkpoint file cannot be parsed or does not fit the scenario."""


class DivergenceError(MosError):
    """Training produced a non-finite loss.

    The last finite parameters are attached as ``last_params`` so callers can
    still checkpoint them.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params
