"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter set violates its documented invariants."""


class InputError(ValueError):
    """Data handed to an operation is unusable (too short, overlapping, empty)."""


class DiaryParseError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DiaryValidationError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
