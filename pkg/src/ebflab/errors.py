"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """An argument violates a documented precondition."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of its iteration budget."""


class ConfigError(ValueError):
    """An experiment or validation configuration is malformed."""


class DiameterLearningError(RuntimeError):
    """Diameter learning never observed an arrival for some state pair."""
