"""Exception hierarchy shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NoArbitrageError(DomainError):
    """An option price violates a static no-arbitrage bound."""

    def __init__(self, message, bound=None, side=None):
        super().__init__(message)
        self.bound = bound
        self.side = side


class NumericError(ArithmeticError):
    """An iterative routine failed or produced a non-finite value."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CapacityError(DomainError):
    """A requested enumeration exceeds its configured guard."""


class InsufficientDataError(DomainError):
    """Too few usable observations survived filtering."""


class PropertyFailure(AssertionError):
    """A verified mathematical property was violated."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class SchemaError(ValueError):
    """An input file does not match its documented schema."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConfigError(SchemaError):
    """An experiment configuration is malformed or holds an invalid value."""

    def __init__(self, message, field=None):
        super().__init__(message, column=field)
        self.field = field
