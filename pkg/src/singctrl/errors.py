"""Exception hierarchy shared across the toolkit."""


class SingCtrlError(Exception):
    """Base class for all toolkit errors."""


class ContractError(SingCtrlError, ValueError):
    """Inputs violate a documented shape or domain contract."""


class RolloutDivergedError(SingCtrlError, ArithmeticError):
    """The forward Euler rollout produced a non-finite or invalid state."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"state became invalid at node {index}")


class CostEvaluationError(SingCtrlError, ArithmeticError):
    """The running cost is not finite at some mesh node."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"running cost is not finite at node {index}")


class InfeasibleError(SingCtrlError):
    """The polyhedral feasible set is empty."""


class ParameterDomainError(SingCtrlError, ValueError):
    """Problem parameters fall outside the region where a closed form holds."""


class ConfigError(SingCtrlError, ValueError):
    """A run configuration is invalid; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
