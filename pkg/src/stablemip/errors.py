class ValidationError(ValueError):
    """Invalid parameters or inputs (CLI exit code 2)."""


class NumericalAbort(RuntimeError):
    """Blow-up, non-finite state or conservation failure (CLI exit code 3)."""
