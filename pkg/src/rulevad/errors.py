"""Exception hierarchy.

``InputError`` subclasses describe bad files, flags or arguments supplied by a
caller (CLI exit code 1).  ``InvariantError`` subclasses flag states that should
be impossible for well-formed input (CLI exit code 2).
"""


class RuleVADError(Exception):
    pass


class InputError(RuleVADError, ValueError):
    pass


class InvariantError(RuleVADError, RuntimeError):
    pass


# feature_store
class BadMagic(InputError):
    pass


class DimMismatch(InputError):
    pass


class NonFinite(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class NonMonotonicFrames(InputError):
    pass


class DuplicateVideoId(InputError):
    pass


class MissingFile(InputError):
    pass


# ebmm / lite_temporal / align
class GridMismatch(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class LengthMismatch(InputError):
    pass


class DegenerateEmbedding(InputError):
    pass


class UnknownToken(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class TooFewClasses(InputError):
    pass


# rulemine
class InvalidConfig(InputError):
    pass


class OrderMismatch(InvariantError):
    pass


class MissingSubsetSupport(InvariantError):
    pass


class UniverseTooLarge(InputError):
    pass


# metrics
class NoPositives(InputError):
    pass


class DegenerateLabels(InputError):
    pass


# training
class EmptyDataset(InputError):
    pass


class GradientNonFinite(InvariantError):
    pass
