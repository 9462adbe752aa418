"""Exception hierarchy shared by all eidlab modules."""


class EidlabError(Exception):
    pass


class ValidationError(EidlabError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceError(EidlabError):
    """Requested size exceeds a configured cap."""


class DomainError(EidlabError, ValueError):
    """A user-supplied function returned a value outside its domain."""


class NumericError(EidlabError, ArithmeticError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class UnsupportedError(EidlabError):
    pass


class DominationError(EidlabError, ArithmeticError):
    """A reference measure vanishes where an energy measure does not."""


class InconsistencyError(EidlabError, AssertionError):
    """Two independent routes to the same quantity disagree."""
