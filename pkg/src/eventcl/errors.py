"""Exception types shared across the package."""


class EventclError(Exception):
    """Base class for all eventcl errors."""


class DimensionError(EventclError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class NumericError(EventclError, ArithmeticError):
    """A computation produced or would produce non-finite values."""


class InputError(EventclError, ValueError):
    """An argument violates an operation's precondition."""


class TruncationError(EventclError, ValueError):
    """A sequence exceeds the allowed padded length."""


class ParseError(EventclError, ValueError):
    """A data file line is not valid JSON."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaError(EventclError, ValueError):
    """A data record is valid JSON but violates the expected schema."""

    def __init__(self, message: str, line_number: int | None = None, key: str | None = None):
        loc = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{loc}{message}")
        self.line_number = line_number
        self.key = key


class RangeError(SchemaError):
    """A field value is outside its documented range."""
