"""Exception hierarchy shared by all monge modules."""


class MongeError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(MongeError):
    """A computation produced a non-finite value or failed to converge."""
