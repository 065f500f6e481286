"""Exception hierarchy shared by every estimator in the package."""


class SmoothingError(ValueError):
    """Base class for all errors raised by rbcsmooth."""


class InvalidInputError(SmoothingError):
    pass


class EmptyDataError(InvalidInputError):
    pass


class SingularDesignError(SmoothingError):
    """Local design matrix cannot be inverted at an evaluation point."""

    def __init__(self, message, eval_point=None, bandwidth=None):
        super().__init__(message)
        self.eval_point = eval_point
        self.bandwidth = bandwidth


class DegenerateLeverageError(SmoothingError):
    pass


class FlatObjectiveError(SmoothingError):
    """Bias constants vanish so the bandwidth objective has no interior minimum."""


class UnsupportedMethodError(SmoothingError):
    pass
