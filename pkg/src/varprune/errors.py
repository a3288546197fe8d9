"""Exception types shared across the package.

The CLI maps these onto process exit codes (config 1, numeric 2, I/O 3).
"""


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting when known."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None and key not in message:
            message = f"{key}: {message}"
        super().__init__(message)


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    """Non-finite value encountered. ``step`` is the update index, if any."""

    def __init__(self, message, step=None, record=None):
        self.step = step
        self.record = record
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class FormatError(IOError):
    """Malformed checkpoint/mask file; ``offset`` is the byte position."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)
