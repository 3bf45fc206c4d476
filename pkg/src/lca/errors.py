"""Exception types raised by the library."""


class LcaError(Exception):
    """Base class for all library errors."""


class ZeroColumn(LcaError, ValueError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"dictionary column {self.index} has (near) zero norm")


class InvalidSparsity(LcaError, ValueError):
    pass


class ProblemFormatError(LcaError, ValueError):
    """A problem file is malformed. ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InversionFailure(LcaError, RuntimeError):
    pass


class NonFiniteState(LcaError, FloatingPointError):
    def __init__(self, t):
        self.t = t
        super().__init__(
            f"state became non-finite at t={t!r}; try a smaller dt"
        )


class UnsupportedCost(LcaError, NotImplementedError):
    pass


class EmptySupport(LcaError, ValueError):
    pass


class DegenerateStart(LcaError, ValueError):
    pass


class StepTooLarge(LcaError, ValueError):
    pass
