"""Exception types raised across the package."""


class PiezolegError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PiezolegError, ValueError):
    pass


class NonFinite(PiezolegError, ValueError):
    pass


class NonConvergence(PiezolegError, RuntimeError):
    pass


class IllConditioned(PiezolegError, RuntimeError):
    pass


class InvalidTimestep(PiezolegError, ValueError):
    pass


class OutOfRange(PiezolegError, ValueError):
    pass


class RankDeficient(PiezolegError, ValueError):
    pass


class UnstableFit(PiezolegError, RuntimeError):
    pass


class InvalidRange(PiezolegError, ValueError):
    pass


class EmptyDataset(PiezolegError, ValueError):
    pass


class DegenerateParams(PiezolegError, ValueError):
    pass


class Undetectable(PiezolegError, ValueError):
    pass


class Unstabilizable(PiezolegError, ValueError):
    pass


class NonPositiveWeight(PiezolegError, ValueError):
    pass


class ParamOutOfRange(PiezolegError, ValueError):
    pass


class NonPeriodicKeyframes(PiezolegError, ValueError):
    pass


class MissingBaselineData(PiezolegError, LookupError):
    pass


class EmptyTrace(PiezolegError, ValueError):
    pass


class MissingContactData(PiezolegError, ValueError):
    pass


class ZeroElectricalPower(PiezolegError, ZeroDivisionError):
    pass


class DegenerateReference(PiezolegError, ValueError):
    pass


class InsufficientExcitation(PiezolegError, ValueError):
    pass


class Divergence(PiezolegError, RuntimeError):
    pass


class MissingModel(PiezolegError, FileNotFoundError):
    pass


class PartialFailure(PiezolegError, RuntimeError):
    def __init__(self, message, failed_ids=()):
        super().__init__(message)
        self.failed_ids = tuple(failed_ids)
