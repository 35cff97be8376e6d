"""Exception types shared across the toolkit.

Each class maps to a distinct CLI exit status (see ``EXIT_CODES``).
"""


class SLMError(Exception):
    """Base class for every error raised by this package."""


class IllegalTransition(SLMError):
    """A transition was applied in a state that does not allow it."""

    def __init__(self, message, index=None):
        if index is not None:
            message = "step %d: %s" % (index, message)
        super().__init__(message)
        self.index = index


class NotCompleteParse(SLMError):
    pass


class BracketSyntaxError(SLMError, SyntaxError):
    """Malformed bracketed tree text; carries 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__("%s (line %d, column %d)" % (message, line, column))
        self.line = line
        self.column = column


class TemplateSyntaxError(SLMError, SyntaxError):
    pass


class ArityMismatch(SLMError, ValueError):
    pass


class NoEvents(SLMError, ValueError):
    pass


class NonfiniteWeight(SLMError, ArithmeticError):
    pass


class FormatError(SLMError, ValueError):
    """Malformed model, event or derivation file."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = "line %d: %s" % (lineno, message)
        super().__init__(message)
        self.lineno = lineno


class MissingParse(SLMError):
    """The context scheme needs parse trees but the corpus has none."""


class UsageError(SLMError):
    pass


EXIT_CODES = {
    UsageError: 2,
    MissingParse: 3,
    FormatError: 4,
    BracketSyntaxError: 5,
    TemplateSyntaxError: 5,
    NotCompleteParse: 6,
    IllegalTransition: 6,
    ArityMismatch: 7,
    NoEvents: 7,
    NonfiniteWeight: 7,
}


def exit_code_for(exc):
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1
