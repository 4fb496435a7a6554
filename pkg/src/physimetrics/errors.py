"""Exception types shared across the package."""


class PhysimetricsError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(PhysimetricsError, ValueError):
    pass


class NotARotation(PhysimetricsError, ValueError):
    pass


class NonFinite(PhysimetricsError, ValueError):
    pass


class ShapeMismatch(PhysimetricsError, ValueError):
    pass


class TooShort(PhysimetricsError, ValueError):
    pass


class SinglePerson(PhysimetricsError, ValueError):
    pass


class RankDeficient(PhysimetricsError, ArithmeticError):
    pass


class ParseError(PhysimetricsError):
    """Malformed input file. ``location`` is a line number or byte offset when known."""

    def __init__(self, message, path=None, location=None):
        self.path = path
        self.location = location
        where = ""
        if path is not None:
            where = f"{path}"
            if location is not None:
                where += f":{location}"
            where += ": "
        super().__init__(where + message)


class InvariantViolation(PhysimetricsError, ValueError):
    pass
