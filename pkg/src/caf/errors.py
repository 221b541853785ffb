"""Shared exception types."""


class InvalidArgumentError(ValueError):
    """Input violates a documented precondition."""


class ResourceLimitError(RuntimeError):
    """A brute-force search would exceed its configured budget.

    The message echoes the offending bound so callers can switch strategy
    (e.g. meet-in-the-middle, oracle injection) or raise the budget.
    """


class NumericRangeError(ArithmeticError):
    """A computed value left the representable floating-point range."""


class NonGenericChannelError(ValueError):
    """Channel gains fail the pairwise-distinct-monomials check.

    Raised instead of silently perturbing the channel; resample H.
    """


class InfeasiblePowerError(ValueError):
    """No prime satisfies the power budget for the requested geometry."""


class SearchFailureError(RuntimeError):
    """Randomized search exhausted its attempt budget without success."""
