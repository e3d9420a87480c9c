"""Exception hierarchy shared across the package."""


class WecFarmError(Exception):
    """Base class for all package errors."""


class InvalidArgument(WecFarmError, ValueError):
    pass


class ConfigurationError(WecFarmError, ValueError):
    """A scenario, plan or CLI option is malformed.

    ``field`` names the offending key so the CLI can point at it.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class NumericFailure(WecFarmError, ArithmeticError):
    def __init__(self, message, omega=None, direction=None):
        if omega is not None:
            message = f"{message} (omega={omega:.6g} rad/s, direction={direction:.6g} rad)"
        super().__init__(message)
        self.omega = omega
        self.direction = direction


class PlacementFailure(WecFarmError):
    """No feasible position was produced within the allowed attempts."""

    def __init__(self, attempts, last_point=None):
        super().__init__(f"no feasible position after {attempts} attempts")
        self.attempts = attempts
        self.last_point = last_point


class TrainingFailure(WecFarmError):
    def __init__(self, epoch, message="non-finite training loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class UndefinedStatistic(WecFarmError, ValueError):
    pass


class BudgetExhausted(WecFarmError):
    """Raised by a call counter when the simulator budget is spent."""

    def __init__(self, budget):
        super().__init__(f"simulator budget of {budget} calls exhausted")
        self.budget = budget
