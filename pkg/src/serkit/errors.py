"""Exception types raised across the toolkit.

Every error carries an ``exit_code`` used by the CLI: 2 for configuration
problems, 3 for data problems and 4 for numeric failures.
"""


class SerError(Exception):
    exit_code = 3

    def record(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


# audio / signal
class UnsupportedFormat(SerError):
    pass


class CorruptHeader(SerError):
    pass


class TooShort(SerError):
    pass


class BadFftSize(SerError):
    pass


# corpus
class MissingColumn(SerError):
    pass


class DuplicateId(SerError):
    pass


class UnknownRawLabel(SerError):
    pass


class EmptySplit(SerError):
    pass


class UnknownSpeaker(SerError):
    pass


# containers
class VersionMismatch(SerError):
    pass


class MissingUtterance(SerError):
    pass


class Corrupt(SerError):
    pass


class HashMismatch(SerError):
    pass


# numerics / models
class ShapeMismatch(SerError):
    pass


class BadTarget(SerError):
    pass


class SingleClass(SerError):
    pass


class DimensionMismatch(SerError):
    pass


class NoConvergence(SerError):
    exit_code = 4


class NumericFailure(SerError):
    exit_code = 4


class VariantMismatch(SerError):
    pass


class LabelMismatch(SerError):
    pass


class FeatureKindMismatch(SerError):
    pass


# evaluation
class LengthMismatch(SerError):
    pass


class EmptyEval(SerError):
    pass


class LayoutMismatch(SerError):
    pass


class ConfigError(SerError):
    exit_code = 2

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)

    def record(self):
        rec = super().record()
        rec["keys"] = list(self.keys)
        return rec
