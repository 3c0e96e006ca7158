class RejectedInput(ValueError):
    """Raised when an argument violates an operation's precondition."""


class DataError(RuntimeError):
    """Raised for unreadable or ill-formed input files and numerical failures during training."""
