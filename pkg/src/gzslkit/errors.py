"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`GzslError` and falls into
one of three families that the command line maps to exit codes: configuration
problems (2), bad input data (3) and numerical failures (4).
"""


class GzslError(Exception):
    exit_code = 1


class ConfigError(GzslError, ValueError):
    exit_code = 2


class DataError(GzslError, ValueError):
    exit_code = 3


class NumericError(GzslError, ArithmeticError):
    exit_code = 4


# core data
class UnknownLabel(DataError):
    def __init__(self, label):
        super().__init__(f"label {label} is not in the joint label space")
        self.label = label


class EmptySeenSet(DataError):
    pass


class PartitionOverlap(DataError):
    pass


class ZeroVectorEmbedding(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class RowCountMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


# scorers
class SingleClass(DataError):
    pass


class DegenerateFeatures(DataError):
    pass


class NotEnoughShots(DataError):
    pass


# combiner / metrics
class KTooLarge(DataError):
    pass


class KMismatch(DataError):
    pass


class EmptyClassInTest(DataError):
    pass


class MissingSide(DataError):
    pass


class DegenerateCurve(NumericError):
    pass


# novelty
class DegenerateReference(NumericError):
    pass


# cross-validation
class TooFewClasses(DataError):
    pass


class EmptyGrid(ConfigError):
    pass
