class LandingError(Exception):
    """Base class for every error raised by landingflow."""


class DimensionError(LandingError, ValueError):
    pass


class DomainError(LandingError, ValueError):
    pass


class RankError(DomainError):
    pass


class ConfigError(LandingError, ValueError):
    pass


class PreconditionError(LandingError, ValueError):
    pass


class IntegrationError(LandingError):
    """Raised when an integration cannot continue; keeps the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class RankFailureError(IntegrationError):
    pass


class NonmonotonePenaltyError(IntegrationError):
    pass
