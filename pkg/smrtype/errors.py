class ParseError(ValueError):
    """Raised on malformed program or automaton text. `line` and `column` are 1-based;
    both are 0 when the error is not tied to a position (e.g. an undeclared variable
    detected after parsing)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        if line:
            super().__init__(f"{line}:{column}: {message}")
        else:
            super().__init__(message)


class AutomatonError(ValueError):
    """Raised when an SMR automaton is not well-formed, or two automata cannot be
    combined."""


class ConfigurationError(ValueError):
    """Raised on inconsistent analysis parameters, such as an exploration budget whose
    reusable addresses are not freeable."""
