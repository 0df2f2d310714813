"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the model is defined."""


class PreconditionError(ValueError):
    """A check or solver was applied to data it is not valid for."""


class EmptyTrajectoryError(ValueError):
    pass


class NotConvergedError(RuntimeError):
    """An equilibrium run exhausted its step budget."""


class InconsistentCaseError(ValueError):
    pass


class CFLViolationError(ValueError):
    pass


class DegenerateDiffusionError(ValueError):
    """Maximum diffusivity is not positive, so no explicit time step exists."""


class RegimeExitError(RuntimeError):
    """The solution left the forward (diffusive) regime u > 1/2."""
