"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, invalid parameters or malformed configuration."""


class CapacityError(RuntimeError):
    """Exact enumeration requested above the configured dimension cap."""

    def __init__(self, d, cap):
        self.d = d
        self.cap = cap
        super().__init__(
            f"exact enumeration over {{0,1}}^{d} needs 2^{d} = {2 ** d} target "
            f"evaluations; the cap is d <= {cap} (raise it with d_cap/--d-cap "
            f"if the cost is acceptable)"
        )


class DivergenceError(RuntimeError):
    """An iterate left the admissible parameter box.

    ``trace`` holds whatever was recorded up to the failing iteration.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
