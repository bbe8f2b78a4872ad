"""Exception hierarchy shared across the package."""


class TangleError(Exception):
    """Base class for all package errors."""


class ParamsError(TangleError, ValueError):
    pass


class MissingKey(ParamsError):
    pass


class UnknownKey(ParamsError):
    pass


class NonPositive(ParamsError):
    pass


class NonDivisibleDelay(ParamsError):
    pass


class NonIncreasingDelays(ParamsError):
    pass


class BadProbabilities(ParamsError):
    pass


class InsufficientHistory(TangleError, ValueError):
    pass


class InconsistentHistory(TangleError, ValueError):
    pass


class EmptyTangle(TangleError):
    pass


class EmptyTipSet(TangleError):
    """Raised when parent selection is attempted with no tips."""

    def __init__(self, tick, message=None):
        self.tick = tick
        super().__init__(message or f"no tips available at tick {tick}")


class IdentityViolation(TangleError):
    """An exact counting identity failed between two consecutive ticks."""

    def __init__(self, equation, tick, lhs, rhs, detail=""):
        self.equation = equation
        self.tick = tick
        self.lhs = lhs
        self.rhs = rhs
        msg = f"{equation} violated at tick {tick}: {lhs} != {rhs}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class TooLarge(TangleError, ValueError):
    pass


class DegenerateHistory(TangleError, ValueError):
    pass


class BlowUp(TangleError, ArithmeticError):
    """The fluid integrator left the region where the model makes sense."""

    def __init__(self, t, reason):
        self.t = t
        self.reason = reason
        super().__init__(f"fluid blow-up at t={t:g}: {reason}")


class NoBracket(TangleError, ArithmeticError):
    pass


class NonConvergence(TangleError, ArithmeticError):
    pass


class GridMismatch(TangleError, ValueError):
    pass
