"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A parameter is out of range or inconsistent with another one."""


class InstanceTooLarge(ConfigError):
    """An exact computation would enumerate too many terms."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class InvariantFailure(RuntimeError):
    """A checked bound or identity failed beyond its tolerance."""
