"""Exception hierarchy shared by all modules."""


class BallisticsError(Exception):
    """Base class for every error raised by this package."""


class InvalidScenarioError(BallisticsError, ValueError):
    """A scenario or one of its parameters is malformed."""


class ConfigurationError(InvalidScenarioError):
    """A declared constant (e.g. a Lipschitz bound) contradicts the data."""


class DomainError(BallisticsError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnreachableError(DomainError):
    """No elevation reaches the point at the configured muzzle speed."""


class OutsideReachableSetError(DomainError):
    """The point violates the reachable-set inequalities (e.g. x < kappa)."""


class InfeasibleSphereError(BallisticsError):
    """The search sphere has no sample inside the reachable set."""
