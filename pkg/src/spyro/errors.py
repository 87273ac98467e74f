"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid run configuration (bad syntax, unknown key, bad value).

    Carries an optional file path and line number so the CLI can point
    at the offending line.
    """

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(str(self))

    def __str__(self):
        loc = ""
        if self.path is not None:
            loc = f"{self.path}:"
            if self.line is not None:
                loc += f"{self.line}:"
            loc += " "
        elif self.line is not None:
            loc = f"line {self.line}: "
        return f"{loc}{self.message}"


class NumericError(RuntimeError):
    """Non-finite values where finite ones are required (diverged run)."""
