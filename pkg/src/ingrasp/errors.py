"""Exception types shared across the package."""


class ModelError(ValueError):
    """A hand, grasp or scene document failed validation."""


class DegenerateDirectionError(ValueError):
    """Two fingertips coincide so their connecting direction is undefined."""


class NumericalFailure(ArithmeticError):
    """An iterative routine failed to terminate or produced non-finite values."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload
