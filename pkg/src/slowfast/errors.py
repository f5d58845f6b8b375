"""Exception hierarchy shared by all slowfast modules."""


class SlowFastError(Exception):
    """Base class for every error raised by the package."""


# -- system validation -------------------------------------------------------
class ValidationError(SlowFastError):
    pass


class NonStochasticRow(ValidationError):
    pass


class NegativeDensity(ValidationError):
    pass


class BadEpsilon(ValidationError):
    pass


class BoundViolated(ValidationError):
    pass


class UnknownName(ValidationError):
    pass


# -- numerics ----------------------------------------------------------------
class NoConvergence(SlowFastError):
    pass


class BetaOutOfBracket(SlowFastError):
    pass


class BlowUp(SlowFastError):
    pass


class OutOfTableRange(SlowFastError):
    pass


class TableGap(SlowFastError):
    pass


# -- simulation statistics ---------------------------------------------------
class TooCensored(SlowFastError):
    pass


class TooFewGroups(TooCensored):
    """Fewer than three distinct epsilon groups were supplied."""


class NeighborhoodsOverlap(SlowFastError):
    pass


# -- attractors and transition structure -------------------------------------
class NoAttractors(SlowFastError):
    pass


class DegenerateZero(SlowFastError):
    pass


class TooLarge(SlowFastError):
    pass


class AllInfinite(SlowFastError):
    pass


# -- resonance ---------------------------------------------------------------
class NoRoot(SlowFastError):
    pass


class RhoAboveMerge(SlowFastError):
    pass


class SignViolation(SlowFastError):
    pass


class TooFewReversals(SlowFastError):
    pass


# -- configuration / output --------------------------------------------------
class ConfigError(SlowFastError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class UnknownKey(ConfigError):
    pass


class MissingKey(ConfigError):
    pass


class RangeError(MissingKey):
    """A present key whose value is outside its admissible range."""


class EmptyData(SlowFastError):
    pass
