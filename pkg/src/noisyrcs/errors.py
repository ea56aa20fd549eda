"""Exception types shared by the simulators."""


class IntegrityError(RuntimeError):
    """A state violates a structural invariant (negative probability, -I in a stabilizer group)."""


class CapacityError(ValueError):
    """A request exceeds a backend's configured size limit."""


class ConditioningError(ValueError):
    """Conditioning on an event of probability zero."""
