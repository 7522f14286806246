"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A caller broke an API precondition (shapes, index ranges, ...)."""


class DomainError(ValueError):
    """A point lies outside the open domain where a derivative exists."""


class InputError(ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonConvergenceError(RuntimeError):
    """An iteration budget ran out.

    ``result`` carries whatever the solver had at that point (best iterate,
    trace, inner statistics) so callers can inspect or resume.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
