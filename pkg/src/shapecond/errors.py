"""Exception hierarchy shared by every stage."""


class ShapeCondError(Exception):
    """Base class for all package errors."""


class FormatError(ShapeCondError):
    pass


class ParseError(ShapeCondError):
    pass


class EmptyError(ShapeCondError):
    pass


class InvariantError(ShapeCondError):
    pass


class ConfigError(ShapeCondError):
    pass


class ShapeError(ShapeCondError):
    pass


class DegenerateError(ShapeCondError):
    pass


class InsufficientError(ShapeCondError):
    pass


class IntegrityError(ShapeCondError):
    pass


class TooLargeError(ShapeCondError):
    pass


class DivergenceError(ShapeCondError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
