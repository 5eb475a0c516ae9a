"""Exception hierarchy shared by all redeq modules."""


class RedError(Exception):
    """Base class for every error raised by redeq."""


class EquationSyntaxError(RedError, ValueError):
    """An equation string does not conform to the grammar."""

    def __init__(self, message, position=None, expected=None, text=None):
        self.position = position
        self.expected = tuple(expected or ())
        self.text = text
        detail = message
        if position is not None:
            detail += f" at position {position}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownSymbol(EquationSyntaxError):
    """An identifier is neither a variable ``x<k>`` nor a known function."""


class VariableOutOfRange(RedError, IndexError):
    pass


class NodeNotFound(RedError, LookupError):
    pass


class CannotReplaceRoot(RedError, ValueError):
    pass


class NotInvertible(RedError):
    """The residual path crosses a node that has no inverse (sin, cos)."""


class NotApplicable(RedError):
    """Inversion was requested on a leaf, which has no children to call it."""


class AllRowsInvalid(RedError):
    """Too few rows survive the validity mask of a residual target."""


class FitFailed(RedError):
    """The equation discovery model produced no usable expression."""


class EdsTimeout(FitFailed):
    pass


class ProtocolError(FitFailed):
    pass


class TooFewRows(RedError, ValueError):
    pass


class UnsatisfiableRanges(RedError):
    pass


class EmptyComparison(RedError, ValueError):
    pass


class DataError(RedError, ValueError):
    """Malformed or non-finite tabular data."""
