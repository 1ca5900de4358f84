"""Exception types shared across the package."""


class FormDegreeError(ValueError):
    """Raised when form degrees are out of range or incompatible."""


class NotPositiveError(ValueError):
    """Raised when a 3-form fails the positivity (definite type) test.

    Attributes
    ----------
    margin : float
        Smallest eigenvalue of the associated bilinear matrix at the
        worst point.
    site : int or None
        Linear site index of the worst point for field inputs.
    """

    def __init__(self, message, margin=None, site=None):
        super().__init__(message)
        self.margin = margin
        self.site = site


class GridError(ValueError):
    """Raised for invalid grid sizes, layouts or incompatible fields."""


class PositivityLossError(RuntimeError):
    """Raised when a flow step cannot maintain positivity of the 3-form."""

    def __init__(self, message, t=None, margin=None, site=None):
        super().__init__(message)
        self.t = t
        self.margin = margin
        self.site = site


class DivergenceError(RuntimeError):
    """Raised when field values stop being finite during time stepping."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(ValueError):
    """Raised for malformed or out-of-range run configuration values."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
