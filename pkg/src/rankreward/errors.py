"""Exception types raised by the library."""


class InconsistentInputError(ValueError):
    """An input that should be an equilibrium (or match another input) is not."""


class AttainabilityError(ValueError):
    """A target distribution cannot be produced by any non-increasing ranked reward."""

    def __init__(self, message, index=None, rank=None):
        super().__init__(message)
        self.index = index
        self.rank = rank


class StabilityError(ValueError):
    """An explicit scheme was asked to run with too large a time step."""

    def __init__(self, message, required_dt=None):
        super().__init__(message)
        self.required_dt = required_dt


class DegenerateProblemError(ValueError):
    """A closed form is singular for the given parameters."""
