"""Exception hierarchy shared across the engine.

Each family carries the process exit code the CLI maps it to:
config errors exit 2, data errors exit 3, numeric failures exit 4.
"""


class EngineError(Exception):
    exit_code = 1


class ConfigError(EngineError):
    exit_code = 2


class DataError(EngineError):
    exit_code = 3


class NumericError(EngineError):
    exit_code = 4


class MissingFile(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LabelDomainError(DataError):
    pass


class ZeroNormEmbedding(DataError):
    pass


class TooFewRows(DataError):
    pass


class ScheduleMismatch(DataError):
    pass


class ZeroNormVector(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class StaleCache(DataError):
    pass


class EmptyMask(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class AllUndefined(DataError):
    pass


class EmptyReport(DataError):
    pass


class IdentityInitInfeasible(ConfigError):
    pass


class NonFiniteGradient(NumericError):
    pass
