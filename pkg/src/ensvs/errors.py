"""Exception hierarchy shared by all modules."""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class DegenerateInputError(ValidationError):
    """Input is well-formed but too poor to estimate from (e.g. a column with < 2 observations)."""


class InstanceDegenerateError(DegenerateInputError):
    """A single regression instance cannot be run (too few usable rows after missing-data handling)."""


class NumericalError(ArithmeticError):
    """A matrix that must be invertible is (numerically) singular."""


class CsvFormatError(OSError):
    """CSV could not be parsed; message carries the row/column location."""
