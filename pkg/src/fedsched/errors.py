"""Exception types raised across the simulator."""


class FedSchedError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedSchedError, ValueError):
    """Bad configuration key or value."""


class InfeasiblePartitionError(FedSchedError, ValueError):
    pass


class IdxFormatError(FedSchedError, ValueError):
    """Malformed MNIST IDX file."""


class ConstraintViolation(FedSchedError):
    """A scheduling decision breaks a per-slot constraint."""


class DomainError(FedSchedError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ColdStartError(FedSchedError):
    """A link predictor was queried before any observation."""


class OrderingError(FedSchedError, ValueError):
    pass


class UndefinedRatioError(FedSchedError, ArithmeticError):
    pass


class UndefinedMetricError(FedSchedError, ArithmeticError):
    pass


class RoundingError(FedSchedError):
    """Integer rounding failed to reach the LP optimum (indicates an LP bug)."""
