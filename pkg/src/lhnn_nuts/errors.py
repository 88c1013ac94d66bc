"""Exception types shared across the package."""


class DimensionError(ValueError):
    """An array does not have the dimensionality the operation expects."""


class ConfigError(ValueError):
    """A configuration block is invalid.

    ``errors`` holds every violation found, so callers can report all of them
    at once instead of stopping at the first.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class IntegrationError(RuntimeError):
    """A leapfrog step produced or consumed a non-finite value."""

    def __init__(self, message, q=None, p=None):
        super().__init__(message)
        self.q = q
        self.p = p


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
