"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An operation was called on inputs that violate its precondition."""


class ChannelError(ValueError):
    """Kraus data does not describe a valid channel.

    ``residual`` holds ``||sum B_i* B_i - I||`` when the failure is a
    normalization failure, otherwise ``None``.
    """

    def __init__(self, message: str, residual: float | None = None, offending=None):
        super().__init__(message)
        self.residual = residual
        self.offending = offending


class NotAnEnclosureError(PreconditionError):
    """The subspace handed in is not an enclosure for the channel."""

    def __init__(self, message: str, slack: float):
        super().__init__(message)
        self.slack = slack


class PropertyViolation(RuntimeError):
    """A property that holds mathematically failed numerically."""
