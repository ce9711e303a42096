class InputError(ValueError):
    """Rejected input: bad shape, out-of-range value, violated precondition."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class FormatError(ValueError):
    """Malformed binary file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None, path=None):
        super().__init__(message)
        self.offset = offset
        self.path = path


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
