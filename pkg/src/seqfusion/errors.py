class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """Observation does not belong to the density's support type."""


class AssumptionViolation(ConfigError):
    """Two states are not separated by a finite, positive divergence."""

    def __init__(self, message, value=None):
        self.value = value
        super().__init__(message)


class NumericalError(RuntimeError):
    """A numerical routine could not produce a trustworthy answer."""


class RunawayTrialError(RuntimeError):
    """A simulated trial exceeded its step cap."""

    def __init__(self, message, n=None, posterior=None, seed=None):
        self.n = n
        self.posterior = posterior
        self.seed = seed
        super().__init__(message)


class TrialError(RuntimeError):
    """A Monte Carlo trial failed; ``seed`` replays it."""

    def __init__(self, message, seed=None, truth=None):
        self.seed = seed
        self.truth = truth
        super().__init__(f"{message} (truth={truth}, seed={seed})")
