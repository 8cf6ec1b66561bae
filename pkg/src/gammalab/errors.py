"""Exception types shared across the package."""


class TripleValidationError(ValueError):
    """Data fails a Markov-triple invariant; ``invariant`` names the check."""

    def __init__(self, invariant, message):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class TripleFormatError(ValueError):
    """A space or config file cannot be parsed; carries line context."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class FieldMismatchError(ValueError):
    """A scalar field does not bind to the triple it is used with."""


class ConfigError(ValueError):
    """An experiment configuration is unusable (bad field, incompatibility)."""


class NumericError(RuntimeError):
    """A numerical routine failed structurally (eigensolver, kernel positivity)."""
